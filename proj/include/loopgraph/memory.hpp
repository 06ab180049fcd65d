#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "loopgraph/bayes.hpp"
#include "loopgraph/dictionary.hpp"
#include "loopgraph/signature.hpp"
#include "loopgraph/store.hpp"
#include "loopgraph/types.hpp"

namespace loopgraph {

/// A node of the location graph while it is resident (short-term or working
/// memory). Weight counts absorbed merges; member images accumulate through
/// them. Neighbor links live in the graph spine owned by Memory.
struct Location {
    int id = -1;
    Signature signature;
    int weight = 0;
    std::vector<int> member_images;
    int created_at = 0; // iteration index

    bool operator==(const Location&) const = default;
};

/// One merge, either rehearsal (source deleted immediately) or loop closure
/// (source lingers until it leaves the top hypothesis' neighborhood).
/// Weights are replayable from this log: target += source_weight + 1.
struct MergeEvent {
    int iteration = 0;
    int target = -1;
    int source = -1;
    int source_weight = 0;
    bool loop_closure = false;
};

struct MemoryParams {
    int stm_size = 25;
    double rehearsal_threshold = 0.20;
    int neighbor_range = 4; // graph radius shared with the filter's transition model
};

/// Owns the location graph and the resident tiers. The short-term queue
/// holds the most recent locations (excluded from loop-closure matching),
/// the working set feeds the filter, and everything transferred lives in the
/// store until retrieved. All mutation happens on the pipeline thread.
class Memory {
public:
    explicit Memory(MemoryParams params = {}, DictionaryParams dict_params = {}, uint64_t seed = 1);

    /// Resets the per-iteration scratch state (retrieval immunity).
    void begin_iteration(int iteration);

    /// Quantizes the observation and creates a new location linked to the
    /// most recent live one. Returns its id; reports created words.
    int create_location(const DescriptorSet& ds, int* new_words = nullptr);

    /// Compares the new location against the short-term queue, newest first;
    /// the first sufficiently similar member is absorbed: its signature
    /// replaces the new one's, weight and links carry over, and it vanishes.
    /// Returns the absorbed id.
    std::optional<int> rehearse(int location_id);

    void insert_stm(int location_id);

    /// Moves the oldest short-term location into working memory when the
    /// queue exceeds its capacity.
    std::optional<int> promote_oldest();

    /// Accepted hypothesis: the current location absorbs weight, links and
    /// member images of `older`; `older` stays in working memory (flagged
    /// merge-pending) so its hypothesis remains evaluable.
    void merge_loop_closure(int current, int older);

    /// Deletes merge-pending locations that have drifted out of the top
    /// hypothesis' graph neighborhood. Their words, if orphaned, are pushed
    /// to the store so long-term signatures can still resolve them.
    std::vector<int> prune_merged_pending(std::optional<int> top_hypothesis, Store* store);

    /// Picks transfer victims: lowest weight first, oldest id among ties,
    /// skipping this iteration's retrievals and merge-pending locations,
    /// until the words they would orphan reach `words_added` (at least one
    /// victim). Pure; does not mutate state.
    std::vector<int> select_transfer_victims(int words_added) const;

    struct TransferResult {
        std::vector<int> transferred;
        int words_removed = 0;
    };
    /// Detaches the victims from working memory and the dictionary and
    /// enqueues them (with their orphaned words) for persistence.
    TransferResult execute_transfer(const std::vector<int>& victims, Store& store);

    /// Brings back up to `max_count` long-term neighbors of `around`
    /// (closest graph distance first, then id), reconciling their words with
    /// the live dictionary and rewriting long-term references eagerly.
    /// Reports words reinserted into the dictionary. I/O failures skip the
    /// affected location with a warning.
    std::vector<int> retrieve(int around, Store& store, int max_count, int* words_reinserted = nullptr);

    /// Every live node within `radius` links of `id` with its graph
    /// distance (id itself at 0), sorted by id. Unknown ids yield an empty
    /// list.
    bayes::NeighborList neighbors_within(int id, int radius) const;

    // Views.
    const std::deque<int>& stm() const { return stm_; }
    const std::set<int>& wm() const { return wm_; }
    const std::set<int>& ltm_ids() const { return ltm_ids_; }
    const std::set<int>& retrieved_this_iteration() const { return retrieved_; }
    std::set<int> merged_pending_ids() const;
    const Location* find(int id) const;
    const std::vector<int>& links_of(int id) const; // sorted, no duplicates
    bool alive(int id) const { return links_.count(id) > 0; }

    Dictionary& dictionary() { return dictionary_; }
    const Dictionary& dictionary() const { return dictionary_; }

    int created_count() const { return created_count_; }
    int merge_deleted_count() const { return merge_deleted_count_; }
    int current_iteration() const { return iteration_; }
    const std::vector<MergeEvent>& merge_log() const { return merge_log_; }
    const MemoryParams& params() const { return params_; }

    /// Full structural audit: tier partition, conservation, link symmetry,
    /// signature/reference bijection, no orphaned resident words. Throws
    /// ConsistencyError with a description on the first violation.
    void check_invariants() const;

private:
    void link(int a, int b);
    void unlink_all(int id);
    Location& live(int id);
    const Location& live(int id) const;

    MemoryParams params_;
    Dictionary dictionary_;

    std::unordered_map<int, Location> locations_; // resident (STM + WM) records
    std::unordered_map<int, std::vector<int>> links_; // graph spine, all live tiers; sorted adjacency
    std::deque<int> stm_;
    std::set<int> wm_;
    std::set<int> ltm_ids_;
    std::set<int> retrieved_;
    std::map<int, int> merged_pending_; // source -> merge target
    std::unordered_map<int, int> forward_; // deleted id -> merge target, for link rewiring
    std::vector<MergeEvent> merge_log_;

    int next_location_id_ = 0;
    int prev_location_ = -1; // newest live location, linked from the next one
    int iteration_ = 0;
    int created_count_ = 0;
    int merge_deleted_count_ = 0;

    mutable std::vector<uint32_t> bfs_stamp_; // per-id visit marks, epoch-reset
    mutable uint32_t bfs_epoch_ = 0;
};

} // namespace loopgraph
