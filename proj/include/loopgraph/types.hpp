#pragma once

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

namespace loopgraph {

/// One feature vector. Every descriptor in a run has the same dimension.
using Descriptor = std::vector<float>;

/// All descriptors extracted from one observation. May be empty (featureless
/// image); the rest of the pipeline must cope.
struct DescriptorSet {
    int image_id = 0;
    double acquisition_stamp = 0.0; // seconds, monotone over the stream
    std::vector<Descriptor> descriptors;

    bool operator==(const DescriptorSet&) const = default;
};

/// Unordered ground-truth loop-closure pairs. Stored normalized as
/// (earlier, later); the later image is the query side of the pair.
class GroundTruth {
public:
    void add(int a, int b) {
        if (a == b) return;
        pairs_.emplace(std::min(a, b), std::max(a, b));
    }

    bool contains(int a, int b) const {
        return pairs_.count({std::min(a, b), std::max(a, b)}) > 0;
    }

    /// Images that appear as the later element of at least one pair.
    std::set<int> query_images() const {
        std::set<int> out;
        for (const auto& [lo, hi] : pairs_) out.insert(hi);
        return out;
    }

    const std::set<std::pair<int, int>>& pairs() const { return pairs_; }
    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }

    bool operator==(const GroundTruth&) const = default;

private:
    std::set<std::pair<int, int>> pairs_;
};

} // namespace loopgraph
