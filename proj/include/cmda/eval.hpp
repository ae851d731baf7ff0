#pragma once

#include <string>
#include <vector>

#include "cmda/adaptation.hpp"
#include "cmda/dataset.hpp"
#include "cmda/metrics.hpp"
#include "cmda/segmenter.hpp"

namespace cmda {

// Argmax class per voxel, slice by slice with clamped 3-slice stacks. When
// `dam` is non-null the first dam->depth layers route through it (the
// plug-and-play path for target inputs).
LabelMap predict_volume(const Segmenter& model, const DomainAdapter* dam,
                        const AdaptationConfig* adapt_cfg, const Volume& v);

struct EvalResult {
    std::vector<CaseMetrics> cases;
    MetricsReport report;
};

// Dice + ASD per foreground structure over every case of a labeled split.
EvalResult evaluate(const Segmenter& model, const DomainAdapter* dam,
                    const AdaptationConfig* adapt_cfg, const LoadedDataset& test_set);

// Foreground structure names aligned with label values 1..4.
const std::vector<std::string>& structure_names();

}  // namespace cmda
