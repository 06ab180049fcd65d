#include "loopgraph/dictionary.hpp"

#include <algorithm>
#include <unordered_set>

#include "loopgraph/errors.hpp"

namespace loopgraph {

namespace {

double dist_sq(const Descriptor& a, const Descriptor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

// Keeps the k best (dist, id) entries, ties resolved toward smaller ids.
struct TopK {
    explicit TopK(int k) : k_(static_cast<std::size_t>(k)) {}

    void offer(int id, double d) {
        if (entries_.size() == k_) {
            const auto& w = entries_.back();
            if (d > w.dist_sq || (d == w.dist_sq && id > w.word_id)) return;
            entries_.pop_back();
        }
        auto pos = std::lower_bound(entries_.begin(), entries_.end(), std::make_pair(d, id),
                                    [](const Dictionary::Match& m, const std::pair<double, int>& v) {
                                        return m.dist_sq != v.first ? m.dist_sq < v.first
                                                                    : m.word_id < v.second;
                                    });
        entries_.insert(pos, Dictionary::Match{id, d});
    }

    std::vector<Dictionary::Match> take() { return std::move(entries_); }

private:
    std::size_t k_;
    std::vector<Dictionary::Match> entries_;
};

} // namespace

Dictionary::Dictionary(DictionaryParams params, uint64_t seed)
    : params_(params), seed_(seed) {}

const VisualWord* Dictionary::find(int word_id) const {
    auto it = words_.find(word_id);
    return it == words_.end() ? nullptr : &it->second;
}

std::vector<int> Dictionary::word_ids() const {
    std::vector<int> ids;
    ids.reserve(words_.size());
    for (const auto& [id, w] : words_) ids.push_back(id);
    return ids;
}

std::vector<int> Dictionary::searchable_word_ids() const {
    std::vector<int> ids;
    ids.reserve(words_.size());
    std::unordered_set<int> seen;
    for (int id : indexed_ids_) {
        if (words_.count(id) && seen.insert(id).second) ids.push_back(id);
    }
    for (int id : pending_ids_) {
        if (words_.count(id) && seen.insert(id).second) ids.push_back(id);
    }
    if (words_.size() < static_cast<std::size_t>(params_.exact_scan_limit)) {
        // Linear-scan regime: residency itself is the search set.
        ids.clear();
        for (const auto& [id, w] : words_) ids.push_back(id);
        return ids;
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

void Dictionary::check_dim(const Descriptor& d) const {
    if (dim_ >= 0 && static_cast<int>(d.size()) != dim_) {
        throw ConsistencyError("descriptor dimension " + std::to_string(d.size()) +
                               " does not match dictionary dimension " + std::to_string(dim_));
    }
}

std::vector<Dictionary::Match> Dictionary::search(const Descriptor& query, int k) const {
    ++query_count_;
    TopK top(k);
    if (words_.empty()) return top.take();
    check_dim(query);

    if (words_.size() < static_cast<std::size_t>(params_.exact_scan_limit) || forest_.empty()) {
        for (const auto& [id, word] : words_) {
            top.offer(id, dist_sq(query, word.descriptor));
        }
        return top.take();
    }

    const auto rows = forest_.knn(query.data(), k, [this](int row) {
        return words_.count(indexed_ids_[static_cast<std::size_t>(row)]) > 0;
    });
    for (const auto& n : rows) {
        top.offer(indexed_ids_[static_cast<std::size_t>(n.index)], n.dist_sq);
    }
    for (int id : pending_ids_) {
        top.offer(id, dist_sq(query, words_.at(id).descriptor));
    }
    return top.take();
}

void Dictionary::insert_resident(VisualWord word) {
    if (dim_ < 0) dim_ = static_cast<int>(word.descriptor.size());
    const int id = word.id;
    words_.emplace(id, std::move(word));
    if (indexed_set_.count(id)) {
        // Resurrected word; its row is still in the forest.
        --stale_indexed_;
    } else {
        pending_ids_.push_back(id);
    }
}

void Dictionary::note_eviction(int word_id) {
    auto it = std::find(pending_ids_.begin(), pending_ids_.end(), word_id);
    if (it != pending_ids_.end()) {
        pending_ids_.erase(it);
    } else if (indexed_set_.count(word_id)) {
        ++stale_indexed_;
    }
}

void Dictionary::maybe_rebuild() {
    if (words_.size() < static_cast<std::size_t>(params_.exact_scan_limit)) return;
    const std::size_t unindexed = pending_ids_.size() + stale_indexed_;
    const std::size_t threshold = std::max<std::size_t>(
        64, static_cast<std::size_t>(params_.rebuild_fraction * static_cast<double>(indexed_ids_.size())));
    if (unindexed > threshold) rebuild_index();
}

void Dictionary::rebuild_index() {
    ++rebuild_count_;
    indexed_ids_.clear();
    indexed_set_.clear();
    pending_ids_.clear();
    stale_indexed_ = 0;
    if (words_.empty() || dim_ <= 0) {
        forest_.clear();
        return;
    }
    std::vector<float> flat;
    flat.reserve(words_.size() * static_cast<std::size_t>(dim_));
    indexed_ids_.reserve(words_.size());
    for (const auto& [id, word] : words_) {
        indexed_ids_.push_back(id);
        flat.insert(flat.end(), word.descriptor.begin(), word.descriptor.end());
    }
    indexed_set_.insert(indexed_ids_.begin(), indexed_ids_.end());
    forest_.build(flat.data(), static_cast<int>(indexed_ids_.size()), dim_, params_.forest,
                  seed_ + rebuild_count_);
}

Signature Dictionary::quantize(const DescriptorSet& ds, int location_id, int* new_words) {
    Signature sig;
    std::vector<VisualWord> created;
    const double ratio_sq = static_cast<double>(params_.match_ratio) * params_.match_ratio;

    for (const Descriptor& d : ds.descriptors) {
        if (dim_ < 0) dim_ = static_cast<int>(d.size());
        check_dim(d);

        // Match against the vocabulary as of call entry; words created below
        // only become searchable once the whole observation is processed.
        const auto matches = search(d, 2);
        const bool matched = matches.size() == 2 && matches[0].dist_sq < ratio_sq * matches[1].dist_sq;
        if (matched) {
            words_.at(matches[0].word_id).refs[location_id] += 1;
            sig.add(matches[0].word_id);
        } else {
            VisualWord w;
            w.id = next_word_id_++;
            w.descriptor = d;
            w.refs[location_id] = 1;
            sig.add(w.id);
            created.push_back(std::move(w));
        }
    }
    if (new_words) *new_words = static_cast<int>(created.size());
    for (auto& w : created) insert_resident(std::move(w));
    maybe_rebuild();
    return sig;
}

std::vector<VisualWord> Dictionary::remove_location_refs(int location_id, const Signature& sig) {
    std::vector<VisualWord> orphans;
    for (const auto& [word_id, count] : sig.counts()) {
        auto it = words_.find(word_id);
        if (it == words_.end()) {
            throw ConsistencyError("removing refs for location " + std::to_string(location_id) +
                                   ": word " + std::to_string(word_id) + " is not resident");
        }
        VisualWord& word = it->second;
        auto ref = word.refs.find(location_id);
        if (ref == word.refs.end() || ref->second < count) {
            throw ConsistencyError("word " + std::to_string(word_id) + " holds no reference to location " +
                                   std::to_string(location_id));
        }
        ref->second -= count;
        if (ref->second == 0) word.refs.erase(ref);
        if (word.refs.empty()) {
            VisualWord orphan;
            orphan.id = word.id;
            orphan.descriptor = std::move(word.descriptor);
            orphans.push_back(std::move(orphan));
            words_.erase(it);
            note_eviction(word_id);
        }
    }
    maybe_rebuild();
    return orphans;
}

void Dictionary::add_location_refs(int location_id, const Signature& sig) {
    for (const auto& [word_id, count] : sig.counts()) {
        auto it = words_.find(word_id);
        if (it == words_.end()) {
            throw ConsistencyError("adding refs for location " + std::to_string(location_id) +
                                   ": word " + std::to_string(word_id) + " is not resident");
        }
        it->second.refs[location_id] += count;
    }
}

std::map<int, int> Dictionary::reconcile_words(const std::vector<VisualWord>& old_words, int* reinserted) {
    std::map<int, int> mapping;
    std::vector<VisualWord> to_reinsert;
    const double ratio_sq = static_cast<double>(params_.match_ratio) * params_.match_ratio;

    for (const VisualWord& old : old_words) {
        if (mapping.count(old.id)) continue;
        if (words_.count(old.id)) {
            mapping[old.id] = old.id;
            continue;
        }
        check_dim(old.descriptor);
        const auto matches = search(old.descriptor, 2);
        const bool matched = matches.size() == 2 && matches[0].dist_sq < ratio_sq * matches[1].dist_sq;
        if (matched) {
            mapping[old.id] = matches[0].word_id;
        } else {
            VisualWord w;
            w.id = old.id;
            w.descriptor = old.descriptor;
            to_reinsert.push_back(std::move(w));
            mapping[old.id] = old.id;
        }
    }
    if (reinserted) *reinserted = static_cast<int>(to_reinsert.size());
    for (auto& w : to_reinsert) insert_resident(std::move(w));
    maybe_rebuild();
    return mapping;
}

} // namespace loopgraph
