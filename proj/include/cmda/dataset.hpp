#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "cmda/phantom.hpp"

namespace cmda {

enum class Split { kTrain, kTest };
std::string split_tag(Split s);  // "train" / "test"

struct CaseEntry {
    std::string name;
    Split split;
};

// One modality's worth of generated cases plus the train/test assignment,
// read from <dir>/manifest.txt.
struct DatasetManifest {
    std::string dir;
    Modality modality = Modality::A;
    uint64_t seed = 0;
    int depth = 0, height = 0, width = 0;
    int num_classes = 0;
    std::vector<CaseEntry> cases;

    std::vector<std::string> names(Split s) const;
    std::string volume_path(const std::string& name) const;
    std::string labels_path(const std::string& name) const;
    std::string meta_path(const std::string& name) const;
};

// Append-only log of every dataset file the process opens, with a phase tag
// and a forbid-set. Training modes that must not see target labels register
// "labels:<tag>" as forbidden; an open of a forbidden kind throws before the
// file is touched.
struct AuditRecord {
    std::string phase;
    std::string kind;  // e.g. "volume:a", "labels:b", "manifest:a"
    std::string path;
};

class FileAudit {
public:
    void set_phase(std::string phase) { phase_ = std::move(phase); }
    const std::string& phase() const { return phase_; }

    void forbid(const std::string& kind) { forbidden_.insert(kind); }
    void allow(const std::string& kind) { forbidden_.erase(kind); }

    // Called by the loaders before opening. Throws AuditViolation on a
    // forbidden kind; otherwise records (phase, kind, path).
    void record_open(const std::string& kind, const std::string& path);

    const std::vector<AuditRecord>& records() const { return records_; }
    long long count(const std::string& phase, const std::string& kind) const;  // "" matches any
    void write(const std::string& path) const;

private:
    std::string phase_ = "init";
    std::set<std::string> forbidden_;
    std::vector<AuditRecord> records_;
};

struct DatasetGenConfig {
    PhantomSpec spec = PhantomSpec::desk_default();
    int n_train = 16;
    int n_test = 4;
    uint64_t seed = 0;
};

// Writes <dir>/case_XXX.{img.f32,lbl.u8,meta.txt} and <dir>/manifest.txt.
// Case seeds derive from (seed, modality, index) so the two modality
// datasets share no random stream.
DatasetManifest gen_dataset(const std::string& dir, Modality m, const DatasetGenConfig& cfg);

DatasetManifest read_manifest(const std::string& dir, FileAudit* audit = nullptr);

Volume load_case_volume(const DatasetManifest& m, const std::string& name,
                        FileAudit* audit = nullptr);
LabelMap load_case_labels(const DatasetManifest& m, const std::string& name,
                          FileAudit* audit = nullptr);
std::map<std::string, std::string> read_case_meta(const DatasetManifest& m,
                                                  const std::string& name);

struct LoadedCase {
    std::string name;
    Volume vol;
    LabelMap labels;  // empty unless has_labels
    bool has_labels = false;
};

struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<LoadedCase> cases;
    Split split = Split::kTrain;
};

// Loads and standardizes every case in the split. with_labels=false never
// touches the label files (the audit log proves it).
LoadedDataset load_split(const DatasetManifest& m, Split split, bool with_labels,
                         FileAudit* audit = nullptr);

}  // namespace cmda
