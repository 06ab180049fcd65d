#pragma once

#include <chrono>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "loopgraph/bayes.hpp"
#include "loopgraph/memory.hpp"
#include "loopgraph/store.hpp"
#include "loopgraph/types.hpp"

namespace loopgraph {

/// Fixed per-operation charges for the virtual clock, roughly shaped like
/// the real costs (vocabulary lookups dominate and scale with its size).
struct VirtualCostModel {
    double base = 1e-4;                // per iteration
    double per_descriptor = 2e-6;      // per quantized descriptor
    double per_descriptor_word = 2e-8; // x resident words at lookup time
    double per_wm_state = 1e-6;        // likelihood + prediction per state
    double per_retrieval = 2e-3;       // per location brought back
};

/// Iteration clock. Wall mode reads the steady clock; virtual mode sums the
/// model charges above so timing-driven behavior replays identically.
class IterationClock {
public:
    virtual ~IterationClock() = default;
    virtual void begin() = 0;
    virtual void charge(double seconds) = 0;
    virtual double elapsed() const = 0;
};

class WallClock final : public IterationClock {
public:
    void begin() override { start_ = std::chrono::steady_clock::now(); }
    void charge(double) override {}
    double elapsed() const override {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_{};
};

class VirtualClock final : public IterationClock {
public:
    void begin() override { accumulated_ = 0.0; }
    void charge(double seconds) override { accumulated_ += seconds; }
    double elapsed() const override { return accumulated_; }

private:
    double accumulated_ = 0.0;
};

struct PipelineConfig {
    double t_time = std::numeric_limits<double>::infinity(); // seconds; inf disables transfer
    double t_rehearsal = 0.20;
    double t_loop = 0.10;
    int t_min_hyp = 15;
    int stm_size = 25;
    float match_ratio = 0.8f;
    double gaussian_sigma = 1.6;
    int neighbor_range = 4;
    int max_retrieved = 2; // 0 disables retrieval
    uint64_t seed = 0;
    bool use_virtual_clock = false;
    VirtualCostModel cost;
    bool validate_each_iteration = false;
    DictionaryParams dictionary;

    void validate() const;
};

struct IterationReport {
    int image_id = 0;
    double elapsed = 0.0; // measured up to just before the transfer step
    std::optional<std::pair<int, double>> accepted_hypothesis; // (location, summed probability)
    int wm_size = 0;
    int stm_size = 0;
    int dictionary_size = 0;
    int retrieved = 0;
    int transferred = 0;
};

struct DetectionEntry {
    int query_image = 0;
    int location_id = -1;
    double probability = 0.0;
    std::vector<int> matched_images; // the matched location's member images at acceptance time
};

/// Pre-gate record of each iteration's strongest hypothesis; threshold
/// sweeps replay these instead of re-running the pipeline.
struct HypothesisSample {
    int image_id = 0;
    int location_id = -1;
    double probability = 0.0;
    int n_wm = 0;
    std::vector<int> matched_images;
};

struct RunResult {
    std::vector<IterationReport> reports;
    std::vector<DetectionEntry> detections;
    std::vector<HypothesisSample> trace;
};

/// Executes the per-observation cycle: quantize and create the location,
/// rehearse against the short-term queue, promote, run the filter, select
/// and merge the hypothesis, retrieve long-term neighbors, and transfer
/// when the iteration ran past its time budget.
class Pipeline {
public:
    Pipeline(const PipelineConfig& config, Store& store);

    IterationReport process(const DescriptorSet& ds);

    Memory& memory() { return memory_; }
    const Memory& memory() const { return memory_; }
    const bayes::Posterior& posterior() const { return posterior_; }
    const RunResult& result() const { return result_; }
    RunResult take_result() { return std::move(result_); }

private:
    PipelineConfig config_;
    Store& store_;
    Memory memory_;
    bayes::TransitionParams transition_;
    bayes::Posterior posterior_ = bayes::Posterior::initial();
    std::unique_ptr<IterationClock> clock_;
    RunResult result_;
    int iteration_ = 0;
};

/// Pull-based observation source consumed by a single pipeline thread.
class StreamSource {
public:
    virtual ~StreamSource() = default;
    virtual std::optional<DescriptorSet> next() = 0;
};

class VectorSource final : public StreamSource {
public:
    explicit VectorSource(const std::vector<DescriptorSet>& frames) : frames_(frames) {}
    std::optional<DescriptorSet> next() override {
        if (index_ >= frames_.size()) return std::nullopt;
        return frames_[index_++];
    }

private:
    const std::vector<DescriptorSet>& frames_;
    std::size_t index_ = 0;
};

RunResult run(StreamSource& stream, const PipelineConfig& config, Store& store);
RunResult run(const std::vector<DescriptorSet>& frames, const PipelineConfig& config, Store& store);

/// CSV columns: image_id, elapsed_s, wm_size, stm_size, dict_size,
/// hypothesis_id, hypothesis_p, retrieved, transferred (id -1 / p 0 when no
/// hypothesis was accepted).
void write_iteration_csv(std::ostream& out, const std::vector<IterationReport>& reports);

/// One line per accepted detection: "query_image_id: matched,matched,...".
void write_detection_log(std::ostream& out, const std::vector<DetectionEntry>& detections);

std::vector<IterationReport> load_iteration_csv(const std::filesystem::path& path);
std::vector<DetectionEntry> load_detection_log(const std::filesystem::path& path);

} // namespace loopgraph
