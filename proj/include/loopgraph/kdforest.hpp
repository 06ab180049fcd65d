#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace loopgraph {

struct KdForestParams {
    int trees = 8;
    int leaf_size = 16;
    /// Point-evaluation budget per query; 0 picks max(512, 0.6*size). The
    /// budget is an upper limit: on clustered data the lower-bound pruning
    /// retires most branches long before it is spent, while the worst case
    /// (uniform data in high dimension) still meets the accuracy contract.
    int checks = 0;
};

/// Randomized kd-tree forest over fixed-dimension float descriptors.
/// Each tree splits on a dimension drawn from the few highest-variance
/// dimensions of the subset, so the trees decorrelate and a shared
/// best-bin-first search over all of them converges quickly. Queries are
/// approximate; accuracy is controlled by the checks budget and verified
/// against an exact-scan oracle in the test suite.
class KdForest {
public:
    struct Neighbor {
        int index = -1;
        double dist_sq = 0.0;
    };

    KdForest() = default;

    /// Copies `count` points of `dim` floats from `data` (row-major).
    /// Deterministic for a given seed.
    void build(const float* data, int count, int dim, const KdForestParams& params, uint64_t seed);

    void clear();

    bool empty() const { return count_ == 0; }
    int size() const { return count_; }
    int dim() const { return dim_; }

    /// k nearest stored points to `query`, nearest first; ties broken by
    /// lower index. `accept` may drop stored points from consideration
    /// (they still consume budget). Returns fewer than k when not enough
    /// acceptable points exist within the budget.
    std::vector<Neighbor> knn(const float* query, int k,
                              const std::function<bool(int)>& accept = nullptr) const;

private:
    struct Node {
        int split_dim = -1; // -1 marks a leaf
        float split_val = 0.0f;
        int left = -1;
        int right = -1;
        int begin = 0; // leaf range into order_
        int end = 0;
    };
    struct Tree {
        std::vector<Node> nodes;
        std::vector<int> order;
        int root = -1;
    };

    int build_node(Tree& tree, int begin, int end, class Rng& rng);

    std::vector<float> data_;
    std::vector<Tree> trees_;
    int count_ = 0;
    int dim_ = 0;
    KdForestParams params_;
    mutable std::vector<uint32_t> visited_; // epoch marks, one per point
    mutable uint32_t epoch_ = 0;
};

} // namespace loopgraph
