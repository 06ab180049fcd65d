#include "loopgraph/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "loopgraph/errors.hpp"

namespace loopgraph {

void PipelineConfig::validate() const {
    if (!(t_time > 0.0)) throw ConfigError("t_time must be positive (inf disables transfer)");
    if (t_rehearsal <= 0.0 || t_rehearsal > 1.0) throw ConfigError("t_rehearsal must be in (0,1]");
    if (t_loop <= 0.0 || t_loop > 1.0) throw ConfigError("t_loop must be in (0,1]");
    if (match_ratio <= 0.0f || match_ratio > 1.0f) throw ConfigError("match_ratio must be in (0,1]");
    if (t_min_hyp < 0) throw ConfigError("t_min_hyp must be >= 0");
    if (stm_size < 1) throw ConfigError("stm_size must be >= 1");
    if (neighbor_range < 1) throw ConfigError("neighbor_range must be >= 1");
    if (max_retrieved < 0) throw ConfigError("max_retrieved must be >= 0");
    if (gaussian_sigma <= 0.0) throw ConfigError("gaussian_sigma must be positive");
}

Pipeline::Pipeline(const PipelineConfig& config, Store& store)
    : config_(config),
      store_(store),
      memory_(
          MemoryParams{config.stm_size, config.t_rehearsal, config.neighbor_range},
          [&] {
              DictionaryParams dp = config.dictionary;
              dp.match_ratio = config.match_ratio;
              return dp;
          }(),
          config.seed) {
    config_.validate();
    transition_.neighbor_range = config_.neighbor_range;
    transition_.gaussian_sigma = config_.gaussian_sigma;
    if (config_.use_virtual_clock) {
        clock_ = std::make_unique<VirtualClock>();
    } else {
        clock_ = std::make_unique<WallClock>();
    }
}

IterationReport Pipeline::process(const DescriptorSet& ds) {
    clock_->begin();
    memory_.begin_iteration(iteration_);
    const auto graph = [this](int id, int radius) { return memory_.neighbors_within(id, radius); };

    // Location creation: quantize, then link to the previous location.
    const std::size_t dict_before = memory_.dictionary().size();
    int new_words = 0;
    const int current = memory_.create_location(ds, &new_words);
    clock_->charge(config_.cost.base +
                   static_cast<double>(ds.descriptors.size()) *
                       (config_.cost.per_descriptor +
                        config_.cost.per_descriptor_word * static_cast<double>(dict_before)));

    memory_.rehearse(current);
    memory_.insert_stm(current);
    if (const auto promoted = memory_.promote_oldest()) {
        posterior_ = bayes::adjust_states(posterior_, {}, {*promoted});
    }

    // Filter update over the working set.
    const std::vector<int> wm_states(memory_.wm().begin(), memory_.wm().end());
    std::optional<std::pair<int, double>> best;
    if (!wm_states.empty()) {
        std::vector<std::pair<int, const Signature*>> scored;
        scored.reserve(wm_states.size());
        for (int id : wm_states) scored.emplace_back(id, &memory_.find(id)->signature);

        const auto likelihood = bayes::compute_likelihood(memory_.find(current)->signature, scored);
        const auto prior = bayes::predict(posterior_, wm_states, graph, transition_);
        posterior_ = bayes::update(prior, likelihood.values);
        clock_->charge(static_cast<double>(wm_states.size()) * config_.cost.per_wm_state);

        best = bayes::best_hypothesis(posterior_, graph, config_.neighbor_range);
    }

    HypothesisSample sample;
    sample.image_id = ds.image_id;
    sample.n_wm = static_cast<int>(wm_states.size());
    if (best) {
        sample.location_id = best->first;
        sample.probability = best->second;
        sample.matched_images = memory_.find(best->first)->member_images;
    }
    result_.trace.push_back(sample);

    // Hypothesis selection and loop-closure merge.
    std::optional<std::pair<int, double>> accepted;
    if (best && static_cast<int>(wm_states.size()) >= config_.t_min_hyp &&
        best->second > config_.t_loop) {
        accepted = best;
        DetectionEntry det;
        det.query_image = ds.image_id;
        det.location_id = best->first;
        det.probability = best->second;
        det.matched_images = memory_.find(best->first)->member_images;
        result_.detections.push_back(std::move(det));
        memory_.merge_loop_closure(current, best->first);
    }

    // Merge-pending locations fall away once the top hypothesis moved on.
    const auto pruned = memory_.prune_merged_pending(
        best ? std::optional<int>(best->first) : std::nullopt, &store_);
    if (!pruned.empty()) {
        posterior_ = bayes::adjust_states(posterior_, {pruned.begin(), pruned.end()}, {});
    }

    // Retrieval around the strongest hypothesis when it dominates the
    // new-place mass.
    int retrieved_count = 0;
    int reinserted = 0;
    if (best && config_.max_retrieved > 0 &&
        best->second > posterior_.at(bayes::kNewPlace)) {
        const auto got = memory_.retrieve(best->first, store_, config_.max_retrieved, &reinserted);
        retrieved_count = static_cast<int>(got.size());
        if (!got.empty()) {
            posterior_ = bayes::adjust_states(posterior_, {}, {got.begin(), got.end()});
            clock_->charge(static_cast<double>(retrieved_count) * config_.cost.per_retrieval);
        }
    }

    // Transfer: enforce the time budget with the words added this iteration
    // as the removal quota.
    const double elapsed = clock_->elapsed();
    int transferred = 0;
    if (elapsed > config_.t_time) {
        const auto victims = memory_.select_transfer_victims(new_words + reinserted);
        if (victims.empty()) {
            std::cerr << "[loopgraph] transfer triggered but no eligible locations (iteration "
                      << iteration_ << ")\n";
        } else {
            const auto result = memory_.execute_transfer(victims, store_);
            transferred = static_cast<int>(result.transferred.size());
            posterior_ = bayes::adjust_states(
                posterior_, {result.transferred.begin(), result.transferred.end()}, {});
        }
    }

    if (config_.validate_each_iteration) {
        memory_.check_invariants();
    }

    IterationReport report;
    report.image_id = ds.image_id;
    report.elapsed = elapsed;
    report.accepted_hypothesis = accepted;
    report.wm_size = static_cast<int>(memory_.wm().size());
    report.stm_size = static_cast<int>(memory_.stm().size());
    report.dictionary_size = static_cast<int>(memory_.dictionary().size());
    report.retrieved = retrieved_count;
    report.transferred = transferred;
    result_.reports.push_back(report);
    ++iteration_;
    return report;
}

RunResult run(StreamSource& stream, const PipelineConfig& config, Store& store) {
    Pipeline pipeline(config, store);
    while (auto ds = stream.next()) {
        pipeline.process(*ds);
    }
    return pipeline.take_result();
}

RunResult run(const std::vector<DescriptorSet>& frames, const PipelineConfig& config, Store& store) {
    VectorSource source(frames);
    return run(source, config, store);
}

void write_iteration_csv(std::ostream& out, const std::vector<IterationReport>& reports) {
    out << "image_id,elapsed_s,wm_size,stm_size,dict_size,hypothesis_id,hypothesis_p,retrieved,transferred\n";
    char buf[64];
    for (const auto& r : reports) {
        out << r.image_id << ',';
        std::snprintf(buf, sizeof buf, "%.9g", r.elapsed);
        out << buf << ',' << r.wm_size << ',' << r.stm_size << ',' << r.dictionary_size << ',';
        if (r.accepted_hypothesis) {
            std::snprintf(buf, sizeof buf, "%.9g", r.accepted_hypothesis->second);
            out << r.accepted_hypothesis->first << ',' << buf;
        } else {
            out << "-1,0";
        }
        out << ',' << r.retrieved << ',' << r.transferred << '\n';
    }
}

void write_detection_log(std::ostream& out, const std::vector<DetectionEntry>& detections) {
    for (const auto& d : detections) {
        out << d.query_image << ':';
        for (std::size_t i = 0; i < d.matched_images.size(); ++i) {
            out << (i ? "," : " ") << d.matched_images[i];
        }
        out << '\n';
    }
}

std::vector<IterationReport> load_iteration_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open iteration csv: " + path.string());
    std::vector<IterationReport> reports;
    std::string line;
    bool header = true;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(is, field, ',')) fields.push_back(field);
        if (fields.size() != 9) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 9 csv fields");
        }
        try {
            IterationReport r;
            r.image_id = std::stoi(fields[0]);
            r.elapsed = std::stod(fields[1]);
            r.wm_size = std::stoi(fields[2]);
            r.stm_size = std::stoi(fields[3]);
            r.dictionary_size = std::stoi(fields[4]);
            const int hyp = std::stoi(fields[5]);
            if (hyp >= 0) r.accepted_hypothesis = {hyp, std::stod(fields[6])};
            r.retrieved = std::stoi(fields[7]);
            r.transferred = std::stoi(fields[8]);
            reports.push_back(r);
        } catch (const std::exception&) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed csv row");
        }
    }
    return reports;
}

std::vector<DetectionEntry> load_detection_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open detection log: " + path.string());
    std::vector<DetectionEntry> detections;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 'query: matches'");
        }
        try {
            DetectionEntry det;
            det.query_image = std::stoi(line.substr(0, colon));
            std::string rest = line.substr(colon + 1);
            for (char& c : rest) {
                if (c == ',') c = ' ';
            }
            std::istringstream is(rest);
            int id = 0;
            while (is >> id) det.matched_images.push_back(id);
            detections.push_back(std::move(det));
        } catch (const std::exception&) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed detection line");
        }
    }
    return detections;
}

} // namespace loopgraph
