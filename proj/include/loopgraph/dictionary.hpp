#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <unordered_set>
#include <vector>

#include "loopgraph/kdforest.hpp"
#include "loopgraph/signature.hpp"
#include "loopgraph/types.hpp"

namespace loopgraph {

/// A quantization cell: one representative descriptor plus reverse
/// references to the locations whose signatures use it. The representative
/// never moves; word ids are never reused within a run.
struct VisualWord {
    int id = -1;
    Descriptor descriptor;
    std::map<int, int> refs; // location_id -> multiplicity

    bool operator==(const VisualWord&) const = default;
};

struct DictionaryParams {
    /// Nearest-neighbor distance-ratio threshold: a descriptor matches the
    /// nearest word only when d1/d2 < match_ratio with a second neighbor
    /// present; otherwise it seeds a new word.
    float match_ratio = 0.8f;
    /// Below this many resident words queries use an exact linear scan.
    int exact_scan_limit = 5000;
    /// Words buffered outside the built index (or evicted from it) before a
    /// rebuild is forced, as a fraction of the indexed count.
    double rebuild_fraction = 0.25;
    KdForestParams forest;
};

/// Incremental visual vocabulary over the resident (working + short-term)
/// locations. New descriptors either match an existing word via the
/// distance-ratio test or create one; transfers evict words whose reference
/// lists empty out, and retrieval reconciles previously evicted words back
/// against the live index.
class Dictionary {
public:
    explicit Dictionary(DictionaryParams params = {}, uint64_t seed = 1);

    struct Match {
        int word_id = -1;
        double dist_sq = 0.0;
    };

    /// Quantizes one observation's descriptors against the words resident at
    /// call entry; descriptors that fail the ratio test create new words
    /// (not matchable within the same call). Returns the word multiset.
    Signature quantize(const DescriptorSet& ds, int location_id, int* new_words = nullptr);

    /// Drops `location_id`'s references for every word in `sig`. Words left
    /// with no references are evicted from residency and returned so the
    /// caller can carry them to the persistent store (or discard them when
    /// the location dissolves without being stored).
    std::vector<VisualWord> remove_location_refs(int location_id, const Signature& sig);

    /// Registers references for a retrieved location's (reconciled) signature.
    void add_location_refs(int location_id, const Signature& sig);

    /// Maps previously stored words onto the current vocabulary: still
    /// resident -> identity; ratio-test match -> resident word (old id is
    /// retired for good); no match -> reinserted as resident under its
    /// original id with empty refs. Returns old_id -> resident_id for every
    /// input, identity entries included.
    std::map<int, int> reconcile_words(const std::vector<VisualWord>& old_words,
                                       int* reinserted = nullptr);

    /// Rebuilds the search index from the resident words.
    void rebuild_index();

    /// 2-NN (or k-NN) over resident words; exact below exact_scan_limit,
    /// forest search above.
    std::vector<Match> search(const Descriptor& query, int k) const;

    std::size_t size() const { return words_.size(); }
    bool contains(int word_id) const { return words_.count(word_id) > 0; }
    const VisualWord* find(int word_id) const;
    int dim() const { return dim_; }
    int next_word_id() const { return next_word_id_; }
    const DictionaryParams& params() const { return params_; }

    std::vector<int> word_ids() const;
    /// Ids reachable through search right now (index minus evictions plus
    /// the not-yet-indexed buffer); equals word_ids() by construction and
    /// enumerated independently for the consistency checks.
    std::vector<int> searchable_word_ids() const;

    /// Total distance-ratio lookups since construction (feeds cost models).
    uint64_t query_count() const { return query_count_; }
    uint64_t rebuild_count() const { return rebuild_count_; }

private:
    void insert_resident(VisualWord word);
    void note_eviction(int word_id);
    void maybe_rebuild();
    void check_dim(const Descriptor& d) const;

    DictionaryParams params_;
    uint64_t seed_;
    std::map<int, VisualWord> words_; // resident vocabulary, ordered for determinism
    KdForest forest_;
    std::vector<int> indexed_ids_;   // forest row -> word id
    std::unordered_set<int> indexed_set_;
    std::size_t stale_indexed_ = 0;  // indexed ids no longer resident
    std::vector<int> pending_ids_;   // resident but not in the built forest yet
    int dim_ = -1;
    int next_word_id_ = 0;
    uint64_t rebuild_count_ = 0;
    mutable uint64_t query_count_ = 0;
};

} // namespace loopgraph
