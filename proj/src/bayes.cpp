#include "loopgraph/bayes.hpp"

#include <cmath>
#include <iostream>

#include "loopgraph/errors.hpp"

namespace loopgraph::bayes {

std::vector<double> neighbor_weights(const TransitionParams& params) {
    std::vector<double> weights(static_cast<std::size_t>(params.neighbor_range) + 1);
    const double denom = 2.0 * params.gaussian_sigma * params.gaussian_sigma;
    double total = 0.0;
    for (int k = 0; k <= params.neighbor_range; ++k) {
        weights[static_cast<std::size_t>(k)] = std::exp(-static_cast<double>(k * k) / denom);
        total += (k == 0 ? 1.0 : 2.0) * weights[static_cast<std::size_t>(k)];
    }
    const double scale = params.neighbor_total_mass / total;
    for (double& w : weights) w *= scale;
    return weights;
}

LikelihoodResult compute_likelihood(const Signature& current,
                                    const std::vector<std::pair<int, const Signature*>>& wm_states) {
    LikelihoodResult result;

    int non_null = 0;
    double sum = 0.0;
    for (const auto& [id, sig] : wm_states) {
        const double s = similarity(current, *sig);
        result.scores[id] = s;
        if (s > 0.0) {
            ++non_null;
            sum += s;
        }
    }

    if (non_null == 0) {
        // Nothing matched at all; observation carries no evidence.
        for (const auto& [id, s] : result.scores) result.values[id] = 1.0;
        result.values[kNewPlace] = 1.0;
        return result;
    }

    result.mu = sum / static_cast<double>(non_null);
    double var = 0.0;
    for (const auto& [id, s] : result.scores) {
        if (s > 0.0) {
            const double d = s - result.mu;
            var += d * d;
        }
    }
    result.sigma = std::sqrt(var / static_cast<double>(non_null));

    for (const auto& [id, s] : result.scores) {
        result.values[id] = s >= result.mu + result.sigma ? (s - result.sigma) / result.mu : 1.0;
    }
    if (result.sigma > 0.0) {
        result.values[kNewPlace] = result.mu / result.sigma + 1.0;
    } else {
        // All non-null scores identical: the ratio diverges, so cap it while
        // keeping "uniformly similar means probably new".
        result.values[kNewPlace] = 10.0 * static_cast<double>(wm_states.size() + 1);
    }
    return result;
}

std::map<int, double> predict(const Posterior& prev, const std::vector<int>& wm_states,
                              const NeighborFn& graph, const TransitionParams& params) {
    // wm_states ascending, accumulation into a parallel vector; neighbor
    // lists are id-sorted too, so each source state costs one merge scan.
    std::vector<double> acc(wm_states.size(), 0.0);
    double acc_new = 0.0;

    const auto weights = neighbor_weights(params);
    const double loop_share =
        wm_states.empty() ? 0.0 : params.p_loop_given_new_total / static_cast<double>(wm_states.size());

    for (const auto& [state, mass] : prev.probs) {
        if (mass == 0.0) continue;
        if (state == kNewPlace) {
            acc_new += params.p_new_given_new * mass;
            if (loop_share > 0.0) {
                for (auto& v : acc) v += loop_share * mass;
            }
        } else {
            acc_new += params.p_new_given_loop * mass;
            const auto hood = graph(state, params.neighbor_range);
            std::size_t s = 0;
            for (const auto& [nid, dist] : hood) {
                while (s < wm_states.size() && wm_states[s] < nid) ++s;
                if (s == wm_states.size()) break;
                if (wm_states[s] == nid) {
                    acc[s] += weights[static_cast<std::size_t>(dist)] * mass;
                }
            }
        }
    }

    std::map<int, double> belief;
    belief[kNewPlace] = acc_new;
    for (std::size_t i = 0; i < wm_states.size(); ++i) belief[wm_states[i]] = acc[i];
    return belief;
}

Posterior update(const std::map<int, double>& prior, const std::map<int, double>& likelihood) {
    Posterior post;
    double sum = 0.0;
    for (const auto& [state, p] : prior) {
        auto it = likelihood.find(state);
        const double l = it == likelihood.end() ? 1.0 : it->second;
        const double v = l * p;
        post.probs[state] = v;
        sum += v;
    }
    if (sum <= 0.0) {
        std::cerr << "[loopgraph] degenerate posterior (all products zero), resetting to uniform\n";
        const double u = prior.empty() ? 1.0 : 1.0 / static_cast<double>(prior.size());
        for (auto& [state, p] : post.probs) p = u;
        return post;
    }
    for (auto& [state, p] : post.probs) p /= sum;
    return post;
}

std::map<int, double> summed_hypotheses(const Posterior& post, const NeighborFn& graph, int range) {
    std::map<int, double> sums;
    for (const auto& [state, p] : post.probs) {
        if (state == kNewPlace) continue;
        double acc = 0.0;
        auto it = post.probs.begin();
        for (const auto& [nid, dist] : graph(state, range)) {
            while (it != post.probs.end() && it->first < nid) ++it;
            if (it == post.probs.end()) break;
            if (it->first == nid) acc += it->second;
        }
        sums[state] = acc;
    }
    return sums;
}

std::optional<std::pair<int, double>> best_hypothesis(const Posterior& post, const NeighborFn& graph,
                                                      int range) {
    // The location is picked on its own posterior mass; the returned value is
    // that location's neighborhood sum, which is what the acceptance
    // threshold is compared against. Summing first and then taking the
    // argmax would bias selection toward whichever state happens to have the
    // widest populated window (always the deeper state near a chain end).
    std::optional<int> best_state;
    double best_p = 0.0;
    for (const auto& [state, p] : post.probs) {
        if (state == kNewPlace) continue;
        if (!best_state || p > best_p) {
            best_state = state;
            best_p = p;
        }
    }
    if (!best_state) return std::nullopt;
    double sum = 0.0;
    auto it = post.probs.begin();
    for (const auto& [nid, dist] : graph(*best_state, range)) {
        while (it != post.probs.end() && it->first < nid) ++it;
        if (it == post.probs.end()) break;
        if (it->first == nid) sum += it->second;
    }
    return {{*best_state, sum}};
}

std::optional<std::pair<int, double>> select_hypothesis(const Posterior& post, const NeighborFn& graph,
                                                        int n_wm, double t_loop, int t_min_hyp,
                                                        int range) {
    if (n_wm < t_min_hyp) return std::nullopt;
    auto best = best_hypothesis(post, graph, range);
    if (!best || best->second <= t_loop) return std::nullopt;
    return best;
}

Posterior adjust_states(const Posterior& post, const std::set<int>& removed, const std::set<int>& added) {
    if (removed.count(kNewPlace)) {
        throw ConsistencyError("the new-place state cannot be removed from the posterior");
    }
    Posterior out = post;
    for (int id : removed) {
        if (!out.probs.erase(id)) {
            throw ConsistencyError("removed state " + std::to_string(id) + " is not in the posterior");
        }
    }
    double sum = 0.0;
    for (const auto& [state, p] : out.probs) sum += p;
    if (sum <= 0.0) {
        for (auto& [state, p] : out.probs) p = 0.0;
        out.probs[kNewPlace] = 1.0;
    } else {
        for (auto& [state, p] : out.probs) p /= sum;
    }
    for (int id : added) {
        if (out.probs.count(id)) {
            throw ConsistencyError("added state " + std::to_string(id) + " is already in the posterior");
        }
        out.probs[id] = 0.0;
    }
    return out;
}

} // namespace loopgraph::bayes
