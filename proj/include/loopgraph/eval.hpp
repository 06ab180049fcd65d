#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "loopgraph/pipeline.hpp"
#include "loopgraph/types.hpp"

namespace loopgraph {

struct PRPoint {
    double threshold = 0.0;
    double precision = 1.0; // tp/(tp+fp); vacuously 1 with no detections
    double recall = 0.0;    // tp/gt_count
    int tp = 0;
    int fp = 0;
    int gt_count = 0;
};

/// Scores a detection log against ground truth. A detection is a true
/// positive when any of its matched member images forms a ground-truth pair
/// with the query; each query image counts at most once. gt_count is the
/// number of query images with at least one ground-truth match.
PRPoint score(const std::vector<DetectionEntry>& detections, const GroundTruth& gt,
              double threshold_label = 0.0);

/// Threshold sweep over a recorded hypothesis trace (fast, approximate: the
/// acceptance feedback into merging is the recording run's).
std::vector<PRPoint> pr_sweep_replay(const std::vector<HypothesisSample>& trace, const GroundTruth& gt,
                                     const std::vector<double>& thresholds, int t_min_hyp);

/// Threshold sweep that re-runs the full pipeline per threshold (exact,
/// slow). Scratch store files are created under `scratch_dir`.
std::vector<PRPoint> pr_sweep_rerun(const std::vector<DescriptorSet>& frames, PipelineConfig config,
                                    const GroundTruth& gt, const std::vector<double>& thresholds,
                                    const std::filesystem::path& scratch_dir);

struct TimingSummary {
    double max_s = 0.0;
    double mean_s = 0.0;
    double p95_s = 0.0; // nearest-rank percentile
    int max_wm = 0;
    int max_dictionary = 0;
};

TimingSummary timing_summary(const std::vector<IterationReport>& reports);

/// "0.05,0.1,...,0.9" continues the arithmetic step up to the bound;
/// plain comma/space lists work too.
std::vector<double> parse_thresholds(const std::string& text);

void write_pr_csv(std::ostream& out, const std::vector<PRPoint>& points);

/// Small standalone SVG plots (no dependencies) for quick inspection.
void write_pr_svg(const std::filesystem::path& path, const std::vector<PRPoint>& points);
void write_timing_svg(const std::filesystem::path& path, const std::vector<IterationReport>& reports,
                      double t_time);

} // namespace loopgraph
