#include "loopgraph/store.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <iostream>
#include <string>

#include "loopgraph/errors.hpp"

namespace loopgraph {

namespace {

constexpr char kStoreMagic[4] = {'L', 'G', 'L', 'T'};
constexpr uint32_t kStoreVersion = 1;
constexpr long kHeaderSize = 8;
constexpr uint32_t kMaxPayload = 1u << 28;

constexpr uint8_t kKindLocation = 1;
constexpr uint8_t kKindWord = 2;
constexpr uint8_t kKindWordTombstone = 3;

uint32_t crc32(const void* data, std::size_t len) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = 0xffffffffu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

// Little-endian buffer codec for record payloads.
struct Writer {
    std::string out;
    void u8(uint8_t v) { out.push_back(static_cast<char>(v)); }
    void u32(uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
    void i32(int32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
    void f32(float v) { out.append(reinterpret_cast<const char*>(&v), 4); }
};

struct Reader {
    const std::string& in;
    std::size_t pos = 0;

    explicit Reader(const std::string& s) : in(s) {}

    void need(std::size_t n) const {
        if (pos + n > in.size()) throw IoError("store record truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, in.data() + pos, 4);
        pos += 4;
        return v;
    }
    int32_t i32() {
        need(4);
        int32_t v;
        std::memcpy(&v, in.data() + pos, 4);
        pos += 4;
        return v;
    }
    float f32() {
        need(4);
        float v;
        std::memcpy(&v, in.data() + pos, 4);
        pos += 4;
        return v;
    }
};

void encode_word(Writer& w, const VisualWord& word) {
    w.i32(word.id);
    w.u32(static_cast<uint32_t>(word.descriptor.size()));
    for (float v : word.descriptor) w.f32(v);
}

VisualWord decode_word(Reader& r) {
    VisualWord word;
    word.id = r.i32();
    const uint32_t dim = r.u32();
    word.descriptor.resize(dim);
    for (uint32_t i = 0; i < dim; ++i) word.descriptor[i] = r.f32();
    return word;
}

std::string encode_location(const StoredLocation& loc) {
    Writer w;
    w.i32(loc.location_id);
    w.i32(loc.weight);
    w.i32(loc.created_at);
    w.u32(static_cast<uint32_t>(loc.signature.counts().size()));
    for (const auto& [id, n] : loc.signature.counts()) {
        w.i32(id);
        w.i32(n);
    }
    w.u32(static_cast<uint32_t>(loc.links.size()));
    for (int id : loc.links) w.i32(id);
    w.u32(static_cast<uint32_t>(loc.member_images.size()));
    for (int id : loc.member_images) w.i32(id);
    // Carried orphans are stored as separate word records; the location only
    // remembers which ids it brought along.
    w.u32(static_cast<uint32_t>(loc.orphaned_words.size()));
    for (const auto& word : loc.orphaned_words) w.i32(word.id);
    return std::move(w.out);
}

struct DecodedLocation {
    StoredLocation loc;
    std::vector<int> carried_word_ids;
};

DecodedLocation decode_location(const std::string& payload) {
    Reader r(payload);
    DecodedLocation out;
    out.loc.location_id = r.i32();
    out.loc.weight = r.i32();
    out.loc.created_at = r.i32();
    const uint32_t nsig = r.u32();
    for (uint32_t i = 0; i < nsig; ++i) {
        const int id = r.i32();
        const int n = r.i32();
        out.loc.signature.add(id, n);
    }
    const uint32_t nlinks = r.u32();
    for (uint32_t i = 0; i < nlinks; ++i) out.loc.links.insert(r.i32());
    const uint32_t nmembers = r.u32();
    for (uint32_t i = 0; i < nmembers; ++i) out.loc.member_images.push_back(r.i32());
    const uint32_t norphans = r.u32();
    for (uint32_t i = 0; i < norphans; ++i) out.carried_word_ids.push_back(r.i32());
    return out;
}

} // namespace

Store::Store(const std::filesystem::path& path, StoreOptions options)
    : path_(path), options_(options) {
    if (options_.queue_capacity == 0) options_.queue_capacity = 1;

    const bool exists = std::filesystem::exists(path_);
    file_ = std::fopen(path_.string().c_str(), exists ? "r+b" : "w+b");
    if (!file_) {
        throw IoError("cannot open store: " + path_.string());
    }
    if (exists) {
        char magic[4];
        uint32_t version = 0;
        if (std::fread(magic, 1, 4, file_) != 4 || std::memcmp(magic, kStoreMagic, 4) != 0 ||
            std::fread(&version, 4, 1, file_) != 1 || version != kStoreVersion) {
            std::fclose(file_);
            file_ = nullptr;
            throw IoError("not a store file (bad magic or version): " + path_.string());
        }
        scan_existing_locked();
    } else {
        if (std::fwrite(kStoreMagic, 1, 4, file_) != 4 ||
            std::fwrite(&kStoreVersion, 4, 1, file_) != 1) {
            std::fclose(file_);
            file_ = nullptr;
            throw IoError("cannot initialize store: " + path_.string());
        }
        std::fflush(file_);
        end_offset_ = kHeaderSize;
    }

    writer_ = std::thread([this] { writer_loop(); });
}

Store::~Store() {
    try {
        close();
    } catch (const std::exception& e) {
        std::cerr << "[loopgraph] store close failed: " << e.what() << "\n";
    }
}

void Store::require_open() const {
    if (closed_) throw IoError("store is closed: " + path_.string());
}

void Store::scan_existing_locked() {
    long offset = kHeaderSize;
    while (true) {
        if (std::fseek(file_, offset, SEEK_SET) != 0) break;
        uint8_t kind = 0;
        if (std::fread(&kind, 1, 1, file_) != 1) {
            end_offset_ = offset; // clean EOF
            return;
        }
        uint32_t len = 0, stored_crc = 0;
        std::string payload;
        bool ok = std::fread(&len, 4, 1, file_) == 1 && len <= kMaxPayload;
        if (ok) {
            payload.resize(len);
            ok = std::fread(payload.data(), 1, len, file_) == len &&
                 std::fread(&stored_crc, 4, 1, file_) == 1 && crc32(payload.data(), len) == stored_crc;
        }
        if (!ok) {
            std::cerr << "[loopgraph] store " << path_.string() << ": discarding torn record at offset "
                      << offset << "\n";
            end_offset_ = offset;
            if (::ftruncate(::fileno(file_), offset) != 0) {
                throw IoError("cannot truncate torn store tail: " + path_.string());
            }
            return;
        }
        try {
            Reader r(payload);
            if (kind == kKindLocation) {
                loc_index_[r.i32()] = offset;
            } else if (kind == kKindWord) {
                word_index_[r.i32()] = offset;
            } else if (kind == kKindWordTombstone) {
                word_index_.erase(r.i32());
            } else {
                throw IoError("unknown record kind");
            }
        } catch (const IoError&) {
            std::cerr << "[loopgraph] store " << path_.string() << ": discarding bad record at offset "
                      << offset << "\n";
            end_offset_ = offset;
            if (::ftruncate(::fileno(file_), offset) != 0) {
                throw IoError("cannot truncate bad store tail: " + path_.string());
            }
            return;
        }
        offset += 1 + 4 + static_cast<long>(len) + 4;
    }
    end_offset_ = offset;
}

void Store::append_record_locked(uint8_t kind, const std::string& payload) {
    if (std::fseek(file_, end_offset_, SEEK_SET) != 0) {
        throw IoError("store seek failed: " + path_.string());
    }
    const uint32_t len = static_cast<uint32_t>(payload.size());
    const uint32_t crc = crc32(payload.data(), payload.size());
    if (std::fwrite(&kind, 1, 1, file_) != 1 || std::fwrite(&len, 4, 1, file_) != 1 ||
        std::fwrite(payload.data(), 1, payload.size(), file_) != payload.size() ||
        std::fwrite(&crc, 4, 1, file_) != 1) {
        throw IoError("store write failed: " + path_.string());
    }
    end_offset_ += 1 + 4 + static_cast<long>(payload.size()) + 4;
}

std::string Store::read_payload_locked(long offset, uint8_t expect_kind) {
    if (std::fseek(file_, offset, SEEK_SET) != 0) {
        throw IoError("store seek failed: " + path_.string());
    }
    uint8_t kind = 0;
    uint32_t len = 0, stored_crc = 0;
    if (std::fread(&kind, 1, 1, file_) != 1 || kind != expect_kind ||
        std::fread(&len, 4, 1, file_) != 1 || len > kMaxPayload) {
        throw IoError("store record header corrupt at offset " + std::to_string(offset));
    }
    std::string payload(len, '\0');
    if (std::fread(payload.data(), 1, len, file_) != len || std::fread(&stored_crc, 4, 1, file_) != 1 ||
        crc32(payload.data(), len) != stored_crc) {
        throw IoError("store record corrupt at offset " + std::to_string(offset));
    }
    return payload;
}

std::optional<VisualWord> Store::read_word_locked(long offset) {
    const std::string payload = read_payload_locked(offset, kKindWord);
    Reader r(payload);
    return decode_word(r);
}

std::optional<StoredLocation> Store::read_location_locked(long offset) {
    DecodedLocation decoded = decode_location(read_payload_locked(offset, kKindLocation));
    for (int wid : decoded.carried_word_ids) {
        auto it = word_index_.find(wid);
        if (it == word_index_.end()) continue; // word permanently removed since
        if (auto w = read_word_locked(it->second)) {
            decoded.loc.orphaned_words.push_back(std::move(*w));
        }
    }
    return std::move(decoded.loc);
}

void Store::write_item_locked(const QueueItem& item) {
    auto append_indexed = [this](uint8_t kind, const std::string& payload, std::unordered_map<int, long>& index,
                                 int id) {
        const long at = end_offset_;
        append_record_locked(kind, payload);
        index[id] = at;
    };
    if (item.loc) {
        append_indexed(kKindLocation, encode_location(*item.loc), loc_index_, item.loc->location_id);
        for (const VisualWord& w : item.loc->orphaned_words) {
            Writer enc;
            encode_word(enc, w);
            append_indexed(kKindWord, enc.out, word_index_, w.id);
        }
    } else if (item.bare_words) {
        for (const VisualWord& w : *item.bare_words) {
            Writer enc;
            encode_word(enc, w);
            append_indexed(kKindWord, enc.out, word_index_, w.id);
        }
    }
}

void Store::writer_loop() {
    while (true) {
        QueueItem item;
        {
            std::unique_lock lock(queue_mu_);
            queue_cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
            if (queue_.empty()) {
                if (stop_) return;
                continue;
            }
            item = queue_.front();
            queue_.pop_front();
            in_flight_ = true;
        }
        if (options_.artificial_write_delay.count() > 0) {
            std::this_thread::sleep_for(options_.artificial_write_delay);
        }
        {
            std::lock_guard lock(file_mu_);
            write_item_locked(item);
        }
        {
            std::lock_guard lock(queue_mu_);
            if (item.loc) {
                auto it = pending_locs_.find(item.loc->location_id);
                // Only drop the read-through entry if no newer version of the
                // same id was enqueued meanwhile.
                if (it != pending_locs_.end() && it->second == item.loc) {
                    pending_locs_.erase(it);
                }
                for (const VisualWord& w : item.loc->orphaned_words) {
                    auto wit = pending_words_.find(w.id);
                    if (wit != pending_words_.end() && wit->second.get() == &w) {
                        pending_words_.erase(wit);
                    }
                }
            } else if (item.bare_words) {
                for (const VisualWord& w : *item.bare_words) {
                    auto wit = pending_words_.find(w.id);
                    if (wit != pending_words_.end() && wit->second.get() == &w) {
                        pending_words_.erase(wit);
                    }
                }
            }
            in_flight_ = false;
        }
        queue_cv_.notify_all();
    }
}

uint64_t Store::persist(StoredLocation loc) {
    require_open();
    auto shared = std::make_shared<const StoredLocation>(std::move(loc));
    std::unique_lock lock(queue_mu_);
    queue_cv_.wait(lock, [this] { return queue_.size() < options_.queue_capacity; });
    QueueItem item;
    item.ticket = ++next_ticket_;
    item.loc = shared;
    queue_.push_back(item);
    pending_locs_[shared->location_id] = shared;
    for (const VisualWord& w : shared->orphaned_words) {
        pending_words_[w.id] = std::shared_ptr<const VisualWord>(shared, &w);
    }
    lock.unlock();
    queue_cv_.notify_all();
    return item.ticket;
}

uint64_t Store::persist_words(std::vector<VisualWord> words) {
    require_open();
    if (words.empty()) return 0;
    auto shared = std::make_shared<const std::vector<VisualWord>>(std::move(words));
    std::unique_lock lock(queue_mu_);
    queue_cv_.wait(lock, [this] { return queue_.size() < options_.queue_capacity; });
    QueueItem item;
    item.ticket = ++next_ticket_;
    item.bare_words = shared;
    queue_.push_back(item);
    for (const VisualWord& w : *shared) {
        pending_words_[w.id] = std::shared_ptr<const VisualWord>(shared, &w);
    }
    lock.unlock();
    queue_cv_.notify_all();
    return item.ticket;
}

std::optional<StoredLocation> Store::fetch(int location_id) {
    require_open();
    {
        std::lock_guard lock(queue_mu_);
        auto it = pending_locs_.find(location_id);
        if (it != pending_locs_.end()) return *it->second;
    }
    std::lock_guard lock(file_mu_);
    auto it = loc_index_.find(location_id);
    if (it == loc_index_.end()) return std::nullopt;
    return read_location_locked(it->second);
}

std::optional<VisualWord> Store::fetch_word(int word_id) {
    require_open();
    {
        std::lock_guard lock(queue_mu_);
        auto it = pending_words_.find(word_id);
        if (it != pending_words_.end()) return *it->second;
    }
    std::lock_guard lock(file_mu_);
    auto it = word_index_.find(word_id);
    if (it == word_index_.end()) return std::nullopt;
    return read_word_locked(it->second);
}

std::size_t Store::rewrite_word_refs(const std::map<int, int>& mapping) {
    require_open();
    if (mapping.empty()) return 0;

    // Drain first so the rewrite covers everything accepted so far; the
    // single pipeline thread never races new persists against this call.
    flush();

    std::lock_guard lock(file_mu_);
    std::size_t touched = 0;
    // Snapshot: the loop appends new records and updates the index in place.
    std::vector<std::pair<int, long>> snapshot(loc_index_.begin(), loc_index_.end());
    std::sort(snapshot.begin(), snapshot.end());
    for (const auto& [loc_id, offset] : snapshot) {
        DecodedLocation decoded = decode_location(read_payload_locked(offset, kKindLocation));
        bool affected = false;
        for (const auto& [wid, n] : decoded.loc.signature.counts()) {
            if (mapping.count(wid)) {
                affected = true;
                break;
            }
        }
        if (!affected) continue;

        StoredLocation rewritten = decoded.loc;
        rewritten.signature = decoded.loc.signature.mapped(mapping);
        // Carried ids that were remapped no longer denote stored words.
        for (int wid : decoded.carried_word_ids) {
            if (!mapping.count(wid) || mapping.at(wid) == wid) {
                VisualWord marker;
                marker.id = wid;
                rewritten.orphaned_words.push_back(std::move(marker));
            }
        }
        const std::string payload = encode_location(rewritten);
        append_record_locked(kKindLocation, payload);
        loc_index_[loc_id] = end_offset_ - (1 + 4 + static_cast<long>(payload.size()) + 4);
        ++touched;
    }
    // Retire the replaced words' descriptor records.
    for (const auto& [old_id, new_id] : mapping) {
        if (old_id == new_id) continue;
        if (word_index_.erase(old_id)) {
            Writer enc;
            enc.i32(old_id);
            append_record_locked(kKindWordTombstone, enc.out);
        }
    }
    std::fflush(file_);
    return touched;
}

void Store::flush() {
    require_open();
    {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [this] { return queue_.empty() && !in_flight_; });
    }
    std::lock_guard lock(file_mu_);
    if (std::fflush(file_) != 0 || ::fsync(::fileno(file_)) != 0) {
        throw IoError("store flush failed: " + path_.string());
    }
}

void Store::close() {
    if (closed_) return;
    flush();
    {
        std::lock_guard lock(queue_mu_);
        stop_ = true;
    }
    queue_cv_.notify_all();
    if (writer_.joinable()) writer_.join();
    closed_ = true;
    std::lock_guard lock(file_mu_);
    if (file_) {
        std::fclose(file_);
        file_ = nullptr;
    }
}

std::size_t Store::location_count() {
    return location_ids().size();
}

std::vector<int> Store::location_ids() {
    require_open();
    std::set<int> ids;
    {
        std::lock_guard lock(file_mu_);
        for (const auto& [id, off] : loc_index_) ids.insert(id);
    }
    {
        std::lock_guard lock(queue_mu_);
        for (const auto& [id, loc] : pending_locs_) ids.insert(id);
    }
    return {ids.begin(), ids.end()};
}

} // namespace loopgraph
