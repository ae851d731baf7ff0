#pragma once

#include <stdexcept>
#include <string>

#include "cmda/config.hpp"

namespace cmda {

// Command-line misuse (unknown mode, malformed flag values). The CLI maps
// this to exit code 1; everything else that throws is a runtime failure (2).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Generates the modality-A and modality-B phantom datasets under
// <out_root>/data, with manifests, a resolved-config echo and content
// hashes.
void run_gen_data(const RunConfig& cfg, const std::string& out_root);

// One experiment mode: seg-source | seg-target-scratch | seg-target-stl |
// eval-nodap | adapt-uda. Artifacts land in <out_root>/runs/<mode>.
void run_mode(const std::string& mode, const std::string& depth, const RunConfig& cfg,
              const std::string& out_root);

// adapt-uda at every named depth preset on identical seeds and source
// checkpoint, plus the side-by-side comparison table.
void run_ablate_depth(const RunConfig& cfg, const std::string& out_root);

// "shallow" | "mid" | "deep" | positive integer. Anything else throws
// UsageError (numbers are range-checked later, against the actual model).
void check_depth_flag(const std::string& depth);

}  // namespace cmda
