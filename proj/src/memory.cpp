#include "loopgraph/memory.hpp"

#include <algorithm>
#include <iostream>

#include "loopgraph/errors.hpp"

namespace loopgraph {

namespace {

void merge_sorted_unique(std::vector<int>& into, const std::vector<int>& from) {
    into.insert(into.end(), from.begin(), from.end());
    std::sort(into.begin(), into.end());
    into.erase(std::unique(into.begin(), into.end()), into.end());
}

} // namespace

Memory::Memory(MemoryParams params, DictionaryParams dict_params, uint64_t seed)
    : params_(params), dictionary_(dict_params, seed) {
    if (params_.stm_size < 1) throw ConfigError("stm_size must be >= 1");
    if (params_.rehearsal_threshold <= 0.0 || params_.rehearsal_threshold > 1.0) {
        throw ConfigError("rehearsal_threshold must be in (0,1]");
    }
}

void Memory::begin_iteration(int iteration) {
    iteration_ = iteration;
    retrieved_.clear();
}

Location& Memory::live(int id) {
    auto it = locations_.find(id);
    if (it == locations_.end()) {
        throw ConsistencyError("location " + std::to_string(id) + " is not resident");
    }
    return it->second;
}

const Location& Memory::live(int id) const {
    auto it = locations_.find(id);
    if (it == locations_.end()) {
        throw ConsistencyError("location " + std::to_string(id) + " is not resident");
    }
    return it->second;
}

const Location* Memory::find(int id) const {
    auto it = locations_.find(id);
    return it == locations_.end() ? nullptr : &it->second;
}

const std::vector<int>& Memory::links_of(int id) const {
    auto it = links_.find(id);
    if (it == links_.end()) {
        throw ConsistencyError("location " + std::to_string(id) + " is not in the graph");
    }
    return it->second;
}

std::set<int> Memory::merged_pending_ids() const {
    std::set<int> out;
    for (const auto& [id, target] : merged_pending_) out.insert(id);
    return out;
}

namespace {

bool sorted_contains(const std::vector<int>& v, int x) {
    return std::binary_search(v.begin(), v.end(), x);
}

void sorted_insert(std::vector<int>& v, int x) {
    auto it = std::lower_bound(v.begin(), v.end(), x);
    if (it == v.end() || *it != x) v.insert(it, x);
}

void sorted_erase(std::vector<int>& v, int x) {
    auto it = std::lower_bound(v.begin(), v.end(), x);
    if (it != v.end() && *it == x) v.erase(it);
}

} // namespace

void Memory::link(int a, int b) {
    if (a == b) return;
    sorted_insert(links_[a], b);
    sorted_insert(links_[b], a);
}

void Memory::unlink_all(int id) {
    auto it = links_.find(id);
    if (it == links_.end()) return;
    for (int other : it->second) {
        sorted_erase(links_[other], id);
    }
    it->second.clear();
}

int Memory::create_location(const DescriptorSet& ds, int* new_words) {
    const int id = next_location_id_++;
    Location loc;
    loc.id = id;
    loc.created_at = iteration_;
    loc.member_images.push_back(ds.image_id);
    loc.signature = dictionary_.quantize(ds, id, new_words);
    locations_.emplace(id, std::move(loc));
    links_.emplace(id, std::vector<int>{});
    if (prev_location_ >= 0) link(id, prev_location_);
    prev_location_ = id;
    ++created_count_;
    return id;
}

std::optional<int> Memory::rehearse(int location_id) {
    Location& lt = live(location_id);

    int absorbed = -1;
    for (auto it = stm_.rbegin(); it != stm_.rend(); ++it) {
        if (similarity(lt.signature, live(*it).signature) >= params_.rehearsal_threshold) {
            absorbed = *it;
            break;
        }
    }
    if (absorbed < 0) return std::nullopt;

    Location& old = live(absorbed);
    merge_log_.push_back({iteration_, location_id, absorbed, old.weight, false});

    // The new location keeps only the absorbed signature. Words that were
    // created for the new one and referenced nowhere else dissolve with it;
    // they were never stored, so they are simply dropped.
    dictionary_.remove_location_refs(location_id, lt.signature);
    dictionary_.add_location_refs(location_id, old.signature);
    const auto leftover = dictionary_.remove_location_refs(absorbed, old.signature);
    if (!leftover.empty()) {
        throw ConsistencyError("rehearsal orphaned words that the merged location should reference");
    }

    lt.signature = old.signature;
    lt.weight += old.weight + 1;
    merge_sorted_unique(lt.member_images, old.member_images);

    const std::vector<int> old_links = links_[absorbed];
    for (int other : old_links) {
        if (other != location_id) link(location_id, other);
    }
    unlink_all(absorbed);
    links_.erase(absorbed);

    stm_.erase(std::find(stm_.begin(), stm_.end(), absorbed));
    locations_.erase(absorbed);
    forward_[absorbed] = location_id;
    ++merge_deleted_count_;
    return absorbed;
}

void Memory::insert_stm(int location_id) {
    live(location_id);
    stm_.push_back(location_id);
}

std::optional<int> Memory::promote_oldest() {
    if (static_cast<int>(stm_.size()) <= params_.stm_size) return std::nullopt;
    const int id = stm_.front();
    stm_.pop_front();
    wm_.insert(id);
    return id;
}

void Memory::merge_loop_closure(int current, int older) {
    if (!wm_.count(older)) {
        throw ConsistencyError("loop-closure target " + std::to_string(older) + " is not in working memory");
    }
    Location& lt = live(current);
    Location& li = live(older);
    merge_log_.push_back({iteration_, current, older, li.weight, true});

    lt.weight += li.weight + 1;
    const std::vector<int> li_links = links_[older];
    for (int other : li_links) {
        if (other != current) link(current, other);
    }
    merge_sorted_unique(lt.member_images, li.member_images);
    merged_pending_[older] = current;
}

std::vector<int> Memory::prune_merged_pending(std::optional<int> top_hypothesis, Store* store) {
    std::vector<int> deleted;
    if (!top_hypothesis || merged_pending_.empty()) return deleted;

    const auto hood = neighbors_within(*top_hypothesis, params_.neighbor_range);
    std::vector<int> to_delete;
    for (const auto& [id, target] : merged_pending_) {
        const auto it = std::lower_bound(hood.begin(), hood.end(), std::make_pair(id, 0));
        if (it == hood.end() || it->first != id) to_delete.push_back(id);
    }

    for (int id : to_delete) {
        int target = merged_pending_.at(id);
        while (!locations_.count(target) && forward_.count(target)) {
            target = forward_.at(target);
        }

        Location& loc = live(id);
        auto orphans = dictionary_.remove_location_refs(id, loc.signature);
        if (!orphans.empty() && store) {
            // Long-term signatures may still reference these words; keep
            // their descriptors reachable.
            store->persist_words(std::move(orphans));
        }

        const std::vector<int> old_links = links_[id];
        for (int other : old_links) {
            if (other != target) link(target, other);
        }
        unlink_all(id);
        links_.erase(id);

        wm_.erase(id);
        retrieved_.erase(id);
        locations_.erase(id);
        merged_pending_.erase(id);
        forward_[id] = target;
        ++merge_deleted_count_;
        deleted.push_back(id);
    }
    return deleted;
}

std::vector<int> Memory::select_transfer_victims(int words_added) const {
    std::set<int> eligible;
    for (int id : wm_) {
        if (!retrieved_.count(id) && !merged_pending_.count(id)) eligible.insert(id);
    }

    std::vector<int> victims;
    std::map<int, int> remaining_refs; // word -> distinct referencers left in the simulation
    int orphaned = 0;
    while (!eligible.empty()) {
        int best = -1;
        int best_weight = 0;
        for (int id : eligible) { // ascending id, so ties keep the oldest
            const int w = live(id).weight;
            if (best < 0 || w < best_weight) {
                best = id;
                best_weight = w;
            }
        }
        eligible.erase(best);
        victims.push_back(best);
        for (const auto& [wid, n] : live(best).signature.counts()) {
            auto it = remaining_refs.find(wid);
            if (it == remaining_refs.end()) {
                const VisualWord* word = dictionary_.find(wid);
                if (!word) throw ConsistencyError("signature references unknown word " + std::to_string(wid));
                it = remaining_refs.emplace(wid, static_cast<int>(word->refs.size())).first;
            }
            if (--it->second == 0) ++orphaned;
        }
        if (orphaned >= words_added) break;
    }
    return victims;
}

Memory::TransferResult Memory::execute_transfer(const std::vector<int>& victims, Store& store) {
    TransferResult result;
    for (int id : victims) {
        if (!wm_.count(id)) {
            throw ConsistencyError("transfer victim " + std::to_string(id) + " is not in working memory");
        }
        Location& loc = live(id);
        auto orphans = dictionary_.remove_location_refs(id, loc.signature);
        result.words_removed += static_cast<int>(orphans.size());

        StoredLocation rec;
        rec.location_id = id;
        rec.weight = loc.weight;
        rec.created_at = loc.created_at;
        rec.signature = loc.signature;
        const auto& spine_links = links_.at(id);
        rec.links.insert(spine_links.begin(), spine_links.end());
        rec.member_images = loc.member_images;
        rec.orphaned_words = std::move(orphans);
        store.persist(std::move(rec));

        wm_.erase(id);
        ltm_ids_.insert(id);
        locations_.erase(id);
        result.transferred.push_back(id);
    }
    return result;
}

std::vector<int> Memory::retrieve(int around, Store& store, int max_count, int* words_reinserted) {
    if (words_reinserted) *words_reinserted = 0;
    std::vector<int> retrieved;
    if (max_count <= 0) return retrieved;

    const auto hood = neighbors_within(around, params_.neighbor_range);
    std::vector<std::pair<int, int>> candidates; // (distance, id)
    for (const auto& [id, dist] : hood) {
        if (ltm_ids_.count(id)) candidates.emplace_back(dist, id);
    }
    std::sort(candidates.begin(), candidates.end()); // nearest first, then id

    std::vector<StoredLocation> fetched;
    for (const auto& [dist, id] : candidates) {
        if (static_cast<int>(fetched.size()) >= max_count) break;
        try {
            auto rec = store.fetch(id);
            if (!rec) {
                throw ConsistencyError("long-term record missing for location " + std::to_string(id));
            }
            fetched.push_back(std::move(*rec));
        } catch (const IoError& e) {
            std::cerr << "[loopgraph] retrieval of location " << id << " skipped: " << e.what() << "\n";
        }
    }
    if (fetched.empty()) return retrieved;

    // Collect descriptors for signature words that are no longer resident:
    // first from the orphans the fetched records carry, then from bare word
    // records.
    std::map<int, VisualWord> old_words;
    for (const StoredLocation& rec : fetched) {
        for (const VisualWord& w : rec.orphaned_words) {
            if (!dictionary_.contains(w.id) && !w.descriptor.empty()) old_words.emplace(w.id, w);
        }
    }
    bool io_failed = false;
    for (const StoredLocation& rec : fetched) {
        for (const auto& [wid, n] : rec.signature.counts()) {
            if (dictionary_.contains(wid) || old_words.count(wid)) continue;
            try {
                auto w = store.fetch_word(wid);
                if (!w) {
                    throw ConsistencyError("word record missing for word " + std::to_string(wid));
                }
                old_words.emplace(wid, std::move(*w));
            } catch (const IoError& e) {
                std::cerr << "[loopgraph] retrieval around " << around << " skipped: " << e.what() << "\n";
                io_failed = true;
                break;
            }
        }
        if (io_failed) break;
    }
    if (io_failed) return retrieved;

    std::vector<VisualWord> old_list;
    old_list.reserve(old_words.size());
    for (auto& [id, w] : old_words) old_list.push_back(std::move(w));
    const auto mapping = dictionary_.reconcile_words(old_list, words_reinserted);

    for (StoredLocation& rec : fetched) {
        const int id = rec.location_id;
        Location loc;
        loc.id = id;
        loc.signature = rec.signature.mapped(mapping);
        loc.weight = rec.weight;
        loc.created_at = rec.created_at;
        loc.member_images = std::move(rec.member_images);
        dictionary_.add_location_refs(id, loc.signature);
        locations_.emplace(id, std::move(loc));
        wm_.insert(id);
        retrieved_.insert(id);
        ltm_ids_.erase(id);
        retrieved.push_back(id);
    }

    std::map<int, int> non_identity;
    for (const auto& [from, to] : mapping) {
        if (from != to) non_identity.emplace(from, to);
    }
    if (!non_identity.empty()) {
        store.rewrite_word_refs(non_identity);
    }
    return retrieved;
}

bayes::NeighborList Memory::neighbors_within(int id, int radius) const {
    bayes::NeighborList out;
    if (!links_.count(id)) return out;

    if (bfs_stamp_.size() < static_cast<std::size_t>(next_location_id_)) {
        bfs_stamp_.resize(static_cast<std::size_t>(next_location_id_), 0);
    }
    if (++bfs_epoch_ == 0) {
        std::fill(bfs_stamp_.begin(), bfs_stamp_.end(), 0u);
        bfs_epoch_ = 1;
    }

    bfs_stamp_[static_cast<std::size_t>(id)] = bfs_epoch_;
    out.emplace_back(id, 0);
    // out doubles as the BFS queue; entries are appended in distance order.
    for (std::size_t head = 0; head < out.size(); ++head) {
        const auto [cur, d] = out[head];
        if (d >= radius) continue;
        for (int next : links_.at(cur)) {
            auto& stamp = bfs_stamp_[static_cast<std::size_t>(next)];
            if (stamp != bfs_epoch_) {
                stamp = bfs_epoch_;
                out.emplace_back(next, d + 1);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

void Memory::check_invariants() const {
    if (static_cast<int>(stm_.size()) > params_.stm_size) {
        throw ConsistencyError("short-term queue exceeds its capacity");
    }

    std::set<int> stm_set(stm_.begin(), stm_.end());
    if (stm_set.size() != stm_.size()) throw ConsistencyError("short-term queue has duplicates");

    for (int id : stm_set) {
        if (wm_.count(id)) throw ConsistencyError("location in both STM and WM: " + std::to_string(id));
        if (ltm_ids_.count(id)) throw ConsistencyError("location in both STM and LTM: " + std::to_string(id));
    }
    for (int id : wm_) {
        if (ltm_ids_.count(id)) throw ConsistencyError("location in both WM and LTM: " + std::to_string(id));
    }

    if (locations_.size() != stm_set.size() + wm_.size()) {
        throw ConsistencyError("resident record count does not match STM+WM");
    }
    for (const auto& [id, loc] : locations_) {
        if (!stm_set.count(id) && !wm_.count(id)) {
            throw ConsistencyError("resident location in no tier: " + std::to_string(id));
        }
    }

    const int live_total = static_cast<int>(stm_set.size() + wm_.size() + ltm_ids_.size());
    if (created_count_ - merge_deleted_count_ != live_total) {
        throw ConsistencyError("conservation violated: created " + std::to_string(created_count_) +
                               " - deleted " + std::to_string(merge_deleted_count_) + " != live " +
                               std::to_string(live_total));
    }

    if (links_.size() != static_cast<std::size_t>(live_total)) {
        throw ConsistencyError("graph spine size does not match live locations");
    }
    for (const auto& [id, neighbors] : links_) {
        for (int other : neighbors) {
            if (other == id) throw ConsistencyError("self link on " + std::to_string(id));
            auto it = links_.find(other);
            if (it == links_.end() || !sorted_contains(it->second, id)) {
                throw ConsistencyError("asymmetric link " + std::to_string(id) + " -> " + std::to_string(other));
            }
        }
    }

    for (int id : retrieved_) {
        if (!wm_.count(id)) throw ConsistencyError("retrieved location not in WM: " + std::to_string(id));
    }
    for (const auto& [id, target] : merged_pending_) {
        if (!wm_.count(id)) throw ConsistencyError("merge-pending location not in WM: " + std::to_string(id));
    }

    // Reference bijection: the multiset union of resident signatures must
    // equal the multiset union of word references.
    std::map<std::pair<int, int>, int> from_signatures;
    for (const auto& [id, loc] : locations_) {
        for (const auto& [wid, n] : loc.signature.counts()) {
            from_signatures[{wid, id}] += n;
        }
    }
    std::map<std::pair<int, int>, int> from_refs;
    for (int wid : dictionary_.word_ids()) {
        const VisualWord* word = dictionary_.find(wid);
        if (word->refs.empty()) {
            throw ConsistencyError("resident word with no references: " + std::to_string(wid));
        }
        for (const auto& [loc_id, n] : word->refs) {
            from_refs[{wid, loc_id}] += n;
        }
    }
    if (from_signatures != from_refs) {
        throw ConsistencyError("signature/reference bijection violated");
    }

    // The search structures must cover exactly the resident vocabulary.
    const auto resident = dictionary_.word_ids();
    const auto searchable = dictionary_.searchable_word_ids();
    if (resident != searchable) {
        throw ConsistencyError("search index does not cover exactly the resident words");
    }
}

} // namespace loopgraph
