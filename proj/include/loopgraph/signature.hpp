#pragma once

#include <map>

namespace loopgraph {

/// Bag-of-words representation of a location: a multiset of word ids.
class Signature {
public:
    Signature() = default;

    void add(int word_id, int count = 1) {
        counts_[word_id] += count;
        total_ += count;
    }

    /// Total number of words, multiplicities included.
    int total() const { return total_; }
    bool empty() const { return total_ == 0; }

    const std::map<int, int>& counts() const { return counts_; }

    /// Rewrites word ids through `idmap`; ids absent from the map are kept.
    /// Multiplicities merge when two old ids map to the same new id.
    Signature mapped(const std::map<int, int>& idmap) const {
        Signature out;
        for (const auto& [id, n] : counts_) {
            auto it = idmap.find(id);
            out.add(it != idmap.end() ? it->second : id, n);
        }
        return out;
    }

    bool operator==(const Signature&) const = default;

private:
    std::map<int, int> counts_;
    int total_ = 0;
};

/// Word-overlap ratio between two signatures: the number of matched word
/// pairs divided by the larger signature's word count. Ranges over [0,1];
/// two empty signatures score 0 so that featureless locations never match.
inline double similarity(const Signature& a, const Signature& b) {
    if (a.empty() || b.empty()) return 0.0;
    int pairs = 0;
    auto ia = a.counts().begin();
    auto ib = b.counts().begin();
    while (ia != a.counts().end() && ib != b.counts().end()) {
        if (ia->first < ib->first) {
            ++ia;
        } else if (ib->first < ia->first) {
            ++ib;
        } else {
            pairs += ia->second < ib->second ? ia->second : ib->second;
            ++ia;
            ++ib;
        }
    }
    const int denom = a.total() >= b.total() ? a.total() : b.total();
    return static_cast<double>(pairs) / static_cast<double>(denom);
}

} // namespace loopgraph
