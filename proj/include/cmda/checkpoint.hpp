#pragma once

#include <map>
#include <string>

#include "cmda/adaptation.hpp"
#include "cmda/segmenter.hpp"

namespace cmda {

// Binary model file: 8-byte magic, little-endian u32 manifest length, JSON
// manifest (kind, configs, seed, counters, ordered parameter names+shapes),
// then the raw little-endian float32 payload in manifest order. Parameters
// round-trip bit-exactly at that stored precision.
struct CheckpointMeta {
    std::string kind;  // "source" | "adapted"
    uint64_t seed = 0;
    std::map<std::string, long long> counters;
};

void save_source_checkpoint(const std::string& path, const Segmenter& model,
                            uint64_t seed,
                            const std::map<std::string, long long>& counters);

Segmenter load_source_checkpoint(const std::string& path,
                                 CheckpointMeta* meta = nullptr);

struct AdaptedModels {
    Segmenter source;
    DomainAdapter dam;
    AdaptationConfig cfg;
};

void save_adapted_checkpoint(const std::string& path, const Segmenter& source,
                             const DomainAdapter& dam, const AdaptationConfig& cfg,
                             uint64_t seed,
                             const std::map<std::string, long long>& counters);

AdaptedModels load_adapted_checkpoint(const std::string& path,
                                      CheckpointMeta* meta = nullptr);

// Reads just the manifest kind, for dispatching. Errors on malformed files.
std::string checkpoint_kind(const std::string& path);

}  // namespace cmda
