#include "loopgraph/kdforest.hpp"

#include <algorithm>
#include <limits>
#include <queue>

#include "loopgraph/rng.hpp"

namespace loopgraph {

namespace {

constexpr int kVarianceCandidates = 5; // split dim drawn among this many top-variance dims

double dist_sq(const float* a, const float* b, int dim) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

} // namespace

void KdForest::clear() {
    data_.clear();
    trees_.clear();
    visited_.clear();
    count_ = 0;
    dim_ = 0;
    epoch_ = 0;
}

void KdForest::build(const float* data, int count, int dim, const KdForestParams& params, uint64_t seed) {
    clear();
    if (count <= 0 || dim <= 0) return;

    count_ = count;
    dim_ = dim;
    params_ = params;
    data_.assign(data, data + static_cast<std::size_t>(count) * dim);
    visited_.assign(static_cast<std::size_t>(count), 0);

    Rng rng(seed, 0x6b64666f72657374ULL);
    trees_.resize(static_cast<std::size_t>(std::max(1, params.trees)));
    for (Tree& tree : trees_) {
        tree.order.resize(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) tree.order[static_cast<std::size_t>(i)] = i;
        tree.nodes.reserve(static_cast<std::size_t>(2 * count / std::max(1, params.leaf_size) + 4));
        tree.root = build_node(tree, 0, count, rng);
    }
}

int KdForest::build_node(Tree& tree, int begin, int end, Rng& rng) {
    const int node_index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    if (end - begin <= std::max(1, params_.leaf_size)) {
        // Sort leaf members so results are reproducible regardless of
        // partition history.
        std::sort(tree.order.begin() + begin, tree.order.begin() + end);
        Node& leaf = tree.nodes[static_cast<std::size_t>(node_index)];
        leaf.begin = begin;
        leaf.end = end;
        return node_index;
    }

    // Mean and variance per dimension over the subset.
    std::vector<double> mean(static_cast<std::size_t>(dim_), 0.0);
    std::vector<double> var(static_cast<std::size_t>(dim_), 0.0);
    const double inv_n = 1.0 / static_cast<double>(end - begin);
    for (int i = begin; i < end; ++i) {
        const float* p = &data_[static_cast<std::size_t>(tree.order[static_cast<std::size_t>(i)]) * dim_];
        for (int d = 0; d < dim_; ++d) mean[static_cast<std::size_t>(d)] += p[d];
    }
    for (int d = 0; d < dim_; ++d) mean[static_cast<std::size_t>(d)] *= inv_n;
    for (int i = begin; i < end; ++i) {
        const float* p = &data_[static_cast<std::size_t>(tree.order[static_cast<std::size_t>(i)]) * dim_];
        for (int d = 0; d < dim_; ++d) {
            const double diff = p[d] - mean[static_cast<std::size_t>(d)];
            var[static_cast<std::size_t>(d)] += diff * diff;
        }
    }

    std::vector<int> dims(static_cast<std::size_t>(dim_));
    for (int d = 0; d < dim_; ++d) dims[static_cast<std::size_t>(d)] = d;
    const int candidates = std::min(kVarianceCandidates, dim_);
    std::partial_sort(dims.begin(), dims.begin() + candidates, dims.end(), [&](int a, int b) {
        const double va = var[static_cast<std::size_t>(a)];
        const double vb = var[static_cast<std::size_t>(b)];
        return va != vb ? va > vb : a < b;
    });
    const int split_dim = dims[rng.uniform_u32(static_cast<uint32_t>(candidates))];
    const float split_val = static_cast<float>(mean[static_cast<std::size_t>(split_dim)]);

    auto mid_it = std::partition(tree.order.begin() + begin, tree.order.begin() + end, [&](int idx) {
        return data_[static_cast<std::size_t>(idx) * dim_ + split_dim] < split_val;
    });
    int mid = static_cast<int>(mid_it - tree.order.begin());
    if (mid == begin || mid == end) {
        // Degenerate spread (e.g. duplicated points): split by position.
        mid = begin + (end - begin) / 2;
        std::nth_element(tree.order.begin() + begin, tree.order.begin() + mid, tree.order.begin() + end,
                         [&](int a, int b) {
                             const float fa = data_[static_cast<std::size_t>(a) * dim_ + split_dim];
                             const float fb = data_[static_cast<std::size_t>(b) * dim_ + split_dim];
                             return fa != fb ? fa < fb : a < b;
                         });
    }

    const int left = build_node(tree, begin, mid, rng);
    const int right = build_node(tree, mid, end, rng);
    Node& node = tree.nodes[static_cast<std::size_t>(node_index)];
    node.split_dim = split_dim;
    node.split_val = split_val;
    node.left = left;
    node.right = right;
    return node_index;
}

std::vector<KdForest::Neighbor> KdForest::knn(const float* query, int k,
                                              const std::function<bool(int)>& accept) const {
    std::vector<Neighbor> best;
    if (count_ == 0 || k <= 0) return best;
    best.reserve(static_cast<std::size_t>(k));

    const int max_checks = params_.checks > 0
                               ? params_.checks
                               : std::max(512, (count_ * 6) / 10);

    if (++epoch_ == 0) { // epoch counter wrapped; reset marks
        std::fill(visited_.begin(), visited_.end(), 0u);
        epoch_ = 1;
    }

    auto worst = [&]() {
        return best.size() < static_cast<std::size_t>(k)
                   ? std::numeric_limits<double>::infinity()
                   : best.back().dist_sq;
    };
    auto offer = [&](int idx, double d) {
        if (best.size() == static_cast<std::size_t>(k)) {
            const Neighbor& w = best.back();
            if (d > w.dist_sq || (d == w.dist_sq && idx > w.index)) return;
            best.pop_back();
        }
        auto pos = std::lower_bound(best.begin(), best.end(), std::make_pair(d, idx),
                                    [](const Neighbor& n, const std::pair<double, int>& v) {
                                        return n.dist_sq != v.first ? n.dist_sq < v.first
                                                                    : n.index < v.second;
                                    });
        best.insert(pos, Neighbor{idx, d});
    };

    // Min-heap of deferred branches keyed by heuristic lower bound; ties
    // broken by (tree,node) so traversal order is reproducible.
    using Entry = std::pair<double, uint64_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    int checks = 0;

    auto descend = [&](uint32_t tree_idx, int node_idx, double lower_bound) {
        const Tree& tree = trees_[tree_idx];
        int ni = node_idx;
        while (true) {
            const Node& node = tree.nodes[static_cast<std::size_t>(ni)];
            if (node.split_dim < 0) {
                for (int i = node.begin; i < node.end; ++i) {
                    const int idx = tree.order[static_cast<std::size_t>(i)];
                    if (visited_[static_cast<std::size_t>(idx)] == epoch_) continue;
                    visited_[static_cast<std::size_t>(idx)] = epoch_;
                    ++checks;
                    if (accept && !accept(idx)) continue;
                    offer(idx, dist_sq(query, &data_[static_cast<std::size_t>(idx) * dim_], dim_));
                }
                return;
            }
            const double delta = static_cast<double>(query[node.split_dim]) - node.split_val;
            const int near = delta < 0.0 ? node.left : node.right;
            const int far = delta < 0.0 ? node.right : node.left;
            heap.emplace(lower_bound + delta * delta,
                         (static_cast<uint64_t>(tree_idx) << 32) | static_cast<uint32_t>(far));
            ni = near;
        }
    };

    for (uint32_t t = 0; t < trees_.size(); ++t) {
        descend(t, trees_[t].root, 0.0);
    }
    while (!heap.empty() && checks < max_checks) {
        const auto [lb, key] = heap.top();
        heap.pop();
        if (lb >= worst()) continue;
        descend(static_cast<uint32_t>(key >> 32), static_cast<int>(key & 0xffffffffu), lb);
    }
    return best;
}

} // namespace loopgraph
