#include "cmda/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace cmda {

namespace {

void write_f32_le(std::ofstream& f, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                 static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
    f.write(b, 4);
}

float read_f32_le(const unsigned char* p) {
    uint32_t u = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                 (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

std::vector<unsigned char> read_binary(const std::string& path, size_t expected) {
    std::ifstream f(path, std::ios::binary);
    if (!f) contract_fail("cannot open ", path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() != expected)
        contract_fail(path, " holds ", buf.size(), " bytes, expected ", expected);
    return buf;
}

std::map<std::string, std::string> parse_kv_lines(const std::string& text,
                                                  const std::string& origin) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            contract_fail(origin, ":", ln, ": expected key=value, got \"", line, "\"");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key,
                           const std::string& origin) {
    auto it = kv.find(key);
    if (it == kv.end()) contract_fail(origin, ": missing key ", key);
    return it->second;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string case_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "case_%03d", i);
    return buf;
}

}  // namespace

std::string split_tag(Split s) { return s == Split::kTrain ? "train" : "test"; }

std::vector<std::string> DatasetManifest::names(Split s) const {
    std::vector<std::string> out;
    for (const auto& c : cases)
        if (c.split == s) out.push_back(c.name);
    return out;
}

std::string DatasetManifest::volume_path(const std::string& name) const {
    return dir + "/" + name + ".img.f32";
}
std::string DatasetManifest::labels_path(const std::string& name) const {
    return dir + "/" + name + ".lbl.u8";
}
std::string DatasetManifest::meta_path(const std::string& name) const {
    return dir + "/" + name + ".meta.txt";
}

void FileAudit::record_open(const std::string& kind, const std::string& path) {
    if (forbidden_.count(kind))
        throw AuditViolation(strmsg("audit: opening ", path, " (", kind,
                                    ") is forbidden in phase \"", phase_, "\""));
    records_.push_back({phase_, kind, path});
}

long long FileAudit::count(const std::string& phase, const std::string& kind) const {
    long long n = 0;
    for (const auto& r : records_)
        if ((phase.empty() || r.phase == phase) && (kind.empty() || r.kind == kind)) ++n;
    return n;
}

void FileAudit::write(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) contract_fail("cannot open ", path, " for writing");
    f << "# phase kind path\n";
    for (const auto& r : records_) f << r.phase << " " << r.kind << " " << r.path << "\n";
}

DatasetManifest gen_dataset(const std::string& dir, Modality m, const DatasetGenConfig& cfg) {
    cfg.spec.validate();
    if (cfg.n_train < 1 || cfg.n_test < 1)
        contract_fail("dataset needs at least one train and one test case");

    fs::create_directories(dir);

    DatasetManifest man;
    man.dir = dir;
    man.modality = m;
    man.seed = cfg.seed;
    man.depth = cfg.spec.depth;
    man.height = cfg.spec.height;
    man.width = cfg.spec.width;
    man.num_classes = cfg.spec.num_classes;

    // Disjoint case-seed streams per modality: even for equal master seeds
    // the two datasets share no geometry draw.
    uint64_t stream = Rng::derive(cfg.seed, m == Modality::A ? 0xDA7A0Aull : 0xDA7A0Bull);

    int total = cfg.n_train + cfg.n_test;
    for (int i = 0; i < total; ++i) {
        uint64_t case_seed = Rng::derive(stream, static_cast<uint64_t>(i));
        PhantomCase pc = gen_case(cfg.spec, case_seed, m);
        std::string name = case_name(i);

        {
            std::ofstream f(man.volume_path(name), std::ios::binary | std::ios::trunc);
            if (!f) contract_fail("cannot open ", man.volume_path(name), " for writing");
            for (double v : pc.vol.data) write_f32_le(f, static_cast<float>(v));
        }
        {
            std::ofstream f(man.labels_path(name), std::ios::binary | std::ios::trunc);
            if (!f) contract_fail("cannot open ", man.labels_path(name), " for writing");
            f.write(reinterpret_cast<const char*>(pc.labels.data.data()),
                    static_cast<std::streamsize>(pc.labels.data.size()));
        }
        {
            std::ostringstream meta;
            meta << "name=" << name << "\n"
                 << "shape=" << pc.vol.d << " " << pc.vol.h << " " << pc.vol.w << "\n"
                 << "spacing=" << pc.vol.spacing[0] << " " << pc.vol.spacing[1] << " "
                 << pc.vol.spacing[2] << "\n"
                 << "modality=" << modality_tag(m) << "\n"
                 << "seed=" << case_seed << "\n"
                 << "geometry=" << pc.geometry << "\n";
            write_text_file(man.meta_path(name), meta.str());
        }

        man.cases.push_back({name, i < cfg.n_train ? Split::kTrain : Split::kTest});
    }

    std::ostringstream mf;
    mf << "modality=" << modality_tag(m) << "\n"
       << "seed=" << cfg.seed << "\n"
       << "shape=" << man.depth << " " << man.height << " " << man.width << "\n"
       << "classes=" << man.num_classes << "\n";
    mf << "train=";
    bool first = true;
    for (const auto& c : man.cases)
        if (c.split == Split::kTrain) {
            mf << (first ? "" : ",") << c.name;
            first = false;
        }
    mf << "\ntest=";
    first = true;
    for (const auto& c : man.cases)
        if (c.split == Split::kTest) {
            mf << (first ? "" : ",") << c.name;
            first = false;
        }
    mf << "\n";
    write_text_file(dir + "/manifest.txt", mf.str());
    return man;
}

DatasetManifest read_manifest(const std::string& dir, FileAudit* audit) {
    std::string path = dir + "/manifest.txt";
    if (!fs::exists(path)) contract_fail("no dataset manifest at ", path);

    DatasetManifest man;
    man.dir = dir;

    auto kv = parse_kv_lines(read_text_file(path), path);
    man.modality = modality_from_tag(require(kv, "modality", path));
    if (audit) audit->record_open("manifest:" + modality_tag(man.modality), path);
    man.seed = std::stoull(require(kv, "seed", path));
    {
        std::istringstream ss(require(kv, "shape", path));
        if (!(ss >> man.depth >> man.height >> man.width))
            contract_fail(path, ": malformed shape line");
    }
    man.num_classes = std::stoi(require(kv, "classes", path));

    for (const auto& name : split_commas(require(kv, "train", path)))
        man.cases.push_back({name, Split::kTrain});
    for (const auto& name : split_commas(require(kv, "test", path)))
        man.cases.push_back({name, Split::kTest});
    if (man.cases.empty()) contract_fail(path, ": manifest lists no cases");
    return man;
}

Volume load_case_volume(const DatasetManifest& m, const std::string& name, FileAudit* audit) {
    std::string path = m.volume_path(name);
    if (audit) audit->record_open("volume:" + modality_tag(m.modality), path);
    size_t n = static_cast<size_t>(m.depth) * m.height * m.width;
    auto buf = read_binary(path, n * 4);

    Volume v(m.depth, m.height, m.width);
    for (size_t i = 0; i < n; ++i) v.data[i] = read_f32_le(&buf[i * 4]);
    v.validate();
    return v;
}

LabelMap load_case_labels(const DatasetManifest& m, const std::string& name, FileAudit* audit) {
    std::string path = m.labels_path(name);
    if (audit) audit->record_open("labels:" + modality_tag(m.modality), path);
    size_t n = static_cast<size_t>(m.depth) * m.height * m.width;
    auto buf = read_binary(path, n);

    LabelMap lm(m.depth, m.height, m.width);
    for (size_t i = 0; i < n; ++i) {
        if (buf[i] >= m.num_classes)
            contract_fail(path, ": label value ", static_cast<int>(buf[i]), " out of range [0,",
                          m.num_classes, ")");
        lm.data[i] = buf[i];
    }
    return lm;
}

std::map<std::string, std::string> read_case_meta(const DatasetManifest& m,
                                                  const std::string& name) {
    std::string path = m.meta_path(name);
    return parse_kv_lines(read_text_file(path), path);
}

LoadedDataset load_split(const DatasetManifest& m, Split split, bool with_labels,
                         FileAudit* audit) {
    LoadedDataset out;
    out.manifest = m;
    out.split = split;
    for (const auto& name : m.names(split)) {
        LoadedCase c;
        c.name = name;
        c.vol = standardize(load_case_volume(m, name, audit));
        if (with_labels) {
            c.labels = load_case_labels(m, name, audit);
            c.has_labels = true;
        }
        out.cases.push_back(std::move(c));
    }
    if (out.cases.empty())
        contract_fail("dataset at ", m.dir, " has no ", split_tag(split), " cases");
    return out;
}

}  // namespace cmda
