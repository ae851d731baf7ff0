#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cmda/phantom.hpp"

namespace cmda {

// Volumetric Dice in percent: 100 * 2|P∩G| / (|P|+|G|). Both masks empty
// counts as perfect vacuous agreement (100).
double dice_score(const LabelMap& pred, const LabelMap& gt, int cls);

// Average symmetric surface distance between the class-c boundaries, in
// spacing units. Boundary = foreground voxel with a 6-neighbor background
// (out-of-volume counts as background). Empty prediction or ground truth
// has no boundary to measure against -> nullopt.
std::optional<double> asd(const LabelMap& pred, const LabelMap& gt, int cls,
                          std::array<double, 3> spacing = {1.0, 1.0, 1.0});

struct CaseMetrics {
    std::string case_name;
    std::vector<double> dice;                // per evaluated class, percent
    std::vector<std::optional<double>> asd;  // per evaluated class, voxels
};

struct MetricStat {
    double mean = 0.0;
    double stddev = 0.0;  // population std
    int n = 0;            // cases contributing
};

struct ClassSummary {
    std::string name;
    MetricStat dice;
    MetricStat asd;   // over cases where ASD is defined
    int asd_na = 0;   // cases where ASD was N/A
};

struct MetricsReport {
    std::vector<ClassSummary> classes;
    int n_cases = 0;
    double mean_dice = 0.0;  // macro average of per-class Dice means
};

// Per-class mean ± population std across cases; N/A surface distances are
// excluded from the ASD aggregate and counted separately.
MetricsReport aggregate(const std::vector<CaseMetrics>& cases,
                        const std::vector<std::string>& class_names);

// Aligned plain-text table: one row per structure, Dice and ASD columns,
// plus the macro-average row.
std::string format_report_table(const MetricsReport& r);

// case,class,dice_percent,asd_voxels rows ("NA" when undefined).
void write_case_metrics_csv(const std::string& path,
                            const std::vector<CaseMetrics>& cases,
                            const std::vector<std::string>& class_names);

// class,dice_mean,dice_std,asd_mean,asd_std,asd_n,asd_na summary rows.
void write_summary_csv(const std::string& path, const MetricsReport& r);

}  // namespace cmda
