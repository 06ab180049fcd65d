#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "loopgraph/signature.hpp"

namespace loopgraph::bayes {

/// Virtual "this is a new place" state.
inline constexpr int kNewPlace = -1;

/// Discrete transition model: staying on "new place" keeps most of the mass,
/// entering a loop state spreads a small total uniformly, and loop-to-loop
/// mass follows a discretized Gaussian over graph distance.
struct TransitionParams {
    double p_new_given_new = 0.9;
    double p_loop_given_new_total = 0.1; // divided by the working-set size
    double p_new_given_loop = 0.1;
    double neighbor_total_mass = 0.9;    // total over offsets -range..+range
    int neighbor_range = 4;
    double gaussian_sigma = 1.6;
};

/// Distribution over {new place} ∪ working-memory location ids.
struct Posterior {
    std::map<int, double> probs;

    static Posterior initial() { return Posterior{{{kNewPlace, 1.0}}}; }

    double at(int state) const {
        auto it = probs.find(state);
        return it == probs.end() ? 0.0 : it->second;
    }
};

struct LikelihoodResult {
    std::map<int, double> scores; // raw similarity per working-memory state
    double mu = 0.0;              // mean of the non-null scores
    double sigma = 0.0;           // population standard deviation of the non-null scores
    std::map<int, double> values; // likelihood per state, kNewPlace included
};

/// (id, graph distance) pairs sorted by id; the query id itself appears at
/// distance 0.
using NeighborList = std::vector<std::pair<int, int>>;

/// Graph adapter: all live node ids within `radius` links of `id`.
using NeighborFn = std::function<NeighborList(int id, int radius)>;

/// Gaussian weights by graph distance, index 0..neighbor_range; scaled so
/// that the full signed support sums to neighbor_total_mass.
std::vector<double> neighbor_weights(const TransitionParams& params);

/// Scores the current signature against each working-memory state. States
/// standing out of the score distribution (s >= mu + sigma) get (s-sigma)/mu,
/// everything else 1; the new-place state gets mu/sigma + 1. Degenerate
/// cases: no non-null score makes every value 1; sigma == 0 with mu > 0 caps
/// the new-place value at 10x the state count.
LikelihoodResult compute_likelihood(const Signature& current,
                                    const std::vector<std::pair<int, const Signature*>>& wm_states);

/// One prediction step: previous posterior pushed through the transition
/// model. wm_states must be ascending. Mass addressed to ids outside the
/// state set is dropped; the result is intentionally unnormalized (update()
/// re-normalizes).
std::map<int, double> predict(const Posterior& prev, const std::vector<int>& wm_states,
                              const NeighborFn& graph, const TransitionParams& params);

/// Posterior ∝ likelihood × prior. An all-zero product degenerates to a
/// uniform posterior with a warning.
Posterior update(const std::map<int, double>& prior, const std::map<int, double>& likelihood);

/// Per-state hypothesis strength: posterior summed over the state's graph
/// neighborhood within the transition range (the state itself included).
std::map<int, double> summed_hypotheses(const Posterior& post, const NeighborFn& graph, int range);

/// Strongest location hypothesis: the state with the highest posterior mass
/// (ties toward the smaller id), valued at its summed neighborhood
/// probability. Empty when there are no location states.
std::optional<std::pair<int, double>> best_hypothesis(const Posterior& post, const NeighborFn& graph,
                                                      int range);

/// best_hypothesis gated by the loop-closure threshold and the minimum
/// working-set size.
std::optional<std::pair<int, double>> select_hypothesis(const Posterior& post, const NeighborFn& graph,
                                                        int n_wm, double t_loop, int t_min_hyp,
                                                        int range);

/// Drops removed states' mass, renormalizes, and admits added states with
/// zero probability. All mass gone resets to the new-place state.
Posterior adjust_states(const Posterior& post, const std::set<int>& removed, const std::set<int>& added);

} // namespace loopgraph::bayes
