#pragma once

// Shared helpers for the test suites: tiny graph builders and an
// independent dense-matrix implementation of the loop-closure filter used
// as the equivalence oracle. Everything here is deliberately brute-force.

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "loopgraph/bayes.hpp"

namespace test_support {

using Adjacency = std::map<int, std::set<int>>;

inline Adjacency chain_graph(int n) {
    Adjacency adj;
    for (int i = 0; i < n; ++i) adj[i];
    for (int i = 0; i + 1 < n; ++i) {
        adj[i].insert(i + 1);
        adj[i + 1].insert(i);
    }
    return adj;
}

inline loopgraph::bayes::NeighborFn neighbor_fn(const Adjacency& adj) {
    return [&adj](int id, int radius) {
        loopgraph::bayes::NeighborList out;
        if (!adj.count(id)) return out;
        std::map<int, int> dist;
        dist[id] = 0;
        std::vector<int> frontier{id};
        for (int d = 0; d < radius && !frontier.empty(); ++d) {
            std::vector<int> next;
            for (int cur : frontier) {
                for (int nb : adj.at(cur)) {
                    if (!dist.count(nb)) {
                        dist[nb] = d + 1;
                        next.push_back(nb);
                    }
                }
            }
            frontier = std::move(next);
        }
        out.assign(dist.begin(), dist.end());
        return out;
    };
}

// Distances via plain Floyd-Warshall so the oracle does not share the BFS.
inline std::map<std::pair<int, int>, int> all_pairs_distances(const Adjacency& adj, int cap) {
    std::vector<int> ids;
    for (const auto& [id, nb] : adj) ids.push_back(id);
    const int n = static_cast<int>(ids.size());
    const int inf = 1 << 20;
    std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
    std::map<int, int> index;
    for (int i = 0; i < n; ++i) index[ids[i]] = i;
    for (int i = 0; i < n; ++i) d[i][i] = 0;
    for (const auto& [a, nbs] : adj) {
        for (int b : nbs) d[index.at(a)][index.at(b)] = 1;
    }
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
            }
        }
    }
    std::map<std::pair<int, int>, int> out;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (d[i][j] <= cap) out[{ids[i], ids[j]}] = d[i][j];
        }
    }
    return out;
}

/// Brute-force reference filter: explicit dense transition matrix, full
/// matrix-vector product, then elementwise likelihood and normalization.
struct DenseFilter {
    loopgraph::bayes::TransitionParams params;

    std::vector<double> gaussian_row() const {
        std::vector<double> w(static_cast<std::size_t>(params.neighbor_range) + 1);
        double total = 0.0;
        for (int k = 0; k <= params.neighbor_range; ++k) {
            w[static_cast<std::size_t>(k)] =
                std::exp(-(static_cast<double>(k) * k) / (2.0 * params.gaussian_sigma * params.gaussian_sigma));
            total += (k == 0 ? 1.0 : 2.0) * w[static_cast<std::size_t>(k)];
        }
        for (auto& v : w) v *= params.neighbor_total_mass / total;
        return w;
    }

    // States: index 0 is the new-place state, then `ids` in order.
    std::vector<std::vector<double>> transition_matrix(const std::vector<int>& ids,
                                                       const Adjacency& adj) const {
        const int n = static_cast<int>(ids.size());
        std::vector<std::vector<double>> m(static_cast<std::size_t>(n) + 1,
                                           std::vector<double>(static_cast<std::size_t>(n) + 1, 0.0));
        const auto dist = all_pairs_distances(adj, params.neighbor_range);
        const auto w = gaussian_row();

        m[0][0] = params.p_new_given_new;
        for (int i = 0; i < n; ++i) {
            m[static_cast<std::size_t>(i) + 1][0] =
                n > 0 ? params.p_loop_given_new_total / static_cast<double>(n) : 0.0;
        }
        for (int j = 0; j < n; ++j) {
            m[0][static_cast<std::size_t>(j) + 1] = params.p_new_given_loop;
            for (int i = 0; i < n; ++i) {
                const auto it = dist.find({ids[static_cast<std::size_t>(j)], ids[static_cast<std::size_t>(i)]});
                if (it != dist.end()) {
                    m[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(j) + 1] =
                        w[static_cast<std::size_t>(it->second)];
                }
            }
        }
        return m;
    }

    /// prev/likelihood keyed by state (new place = loopgraph::bayes::kNewPlace).
    std::map<int, double> step(const std::vector<int>& ids, const Adjacency& adj,
                               const std::map<int, double>& prev,
                               const std::map<int, double>& likelihood) const {
        const int n = static_cast<int>(ids.size());
        const auto m = transition_matrix(ids, adj);

        std::vector<double> prev_vec(static_cast<std::size_t>(n) + 1, 0.0);
        prev_vec[0] = prev.count(loopgraph::bayes::kNewPlace) ? prev.at(loopgraph::bayes::kNewPlace) : 0.0;
        for (int i = 0; i < n; ++i) {
            const auto it = prev.find(ids[static_cast<std::size_t>(i)]);
            prev_vec[static_cast<std::size_t>(i) + 1] = it == prev.end() ? 0.0 : it->second;
        }

        std::vector<double> belief(static_cast<std::size_t>(n) + 1, 0.0);
        for (std::size_t i = 0; i < belief.size(); ++i) {
            for (std::size_t j = 0; j < belief.size(); ++j) {
                belief[i] += m[i][j] * prev_vec[j];
            }
        }

        auto lik_at = [&](int state) {
            const auto it = likelihood.find(state);
            return it == likelihood.end() ? 1.0 : it->second;
        };
        std::vector<double> post(belief.size());
        post[0] = belief[0] * lik_at(loopgraph::bayes::kNewPlace);
        for (int i = 0; i < n; ++i) {
            post[static_cast<std::size_t>(i) + 1] =
                belief[static_cast<std::size_t>(i) + 1] * lik_at(ids[static_cast<std::size_t>(i)]);
        }
        double sum = 0.0;
        for (double v : post) sum += v;
        std::map<int, double> out;
        out[loopgraph::bayes::kNewPlace] = post[0] / sum;
        for (int i = 0; i < n; ++i) {
            out[ids[static_cast<std::size_t>(i)]] = post[static_cast<std::size_t>(i) + 1] / sum;
        }
        return out;
    }
};

} // namespace test_support
