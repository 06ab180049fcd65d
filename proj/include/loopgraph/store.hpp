#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <unordered_map>
#include <vector>

#include "loopgraph/dictionary.hpp"
#include "loopgraph/signature.hpp"

namespace loopgraph {

/// A location as it lives in long-term memory: everything needed to bring it
/// back, including the words that were orphaned when it left the dictionary.
struct StoredLocation {
    int location_id = 0;
    int weight = 0;
    int created_at = 0;
    Signature signature;
    std::set<int> links;
    std::vector<int> member_images;
    std::vector<VisualWord> orphaned_words;

    bool operator==(const StoredLocation&) const = default;
};

struct StoreOptions {
    std::size_t queue_capacity = 128;
    /// Test hook: writer sleeps this long per dequeued item, simulating a
    /// slow disk without touching the enqueue path.
    std::chrono::milliseconds artificial_write_delay{0};
};

/// Single-file long-term store with asynchronous writes and synchronous
/// read-through of the queue. Appends location and word records to a
/// versioned file ("LGLT"); an in-memory id index is rebuilt by scanning at
/// open, latest record wins. One background thread drains a bounded queue;
/// persist() only blocks when that queue is full.
class Store {
public:
    explicit Store(const std::filesystem::path& path, StoreOptions options = {});
    ~Store();

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    /// Enqueues the location (and its carried orphan words) for persistence.
    uint64_t persist(StoredLocation loc);

    /// Enqueues bare word records (words orphaned by a dissolving location).
    uint64_t persist_words(std::vector<VisualWord> words);

    /// Reads a location, observing queued-but-unflushed writes.
    std::optional<StoredLocation> fetch(int location_id);

    /// Reads one word record (resident-word lookups never come here).
    std::optional<VisualWord> fetch_word(int word_id);

    /// Replaces old word ids across every stored signature and retires the
    /// old words' records. Drains the queue first so the rewrite covers all
    /// accepted writes, then applies atomically with respect to readers.
    /// Returns the number of location records touched.
    std::size_t rewrite_word_refs(const std::map<int, int>& mapping);

    /// Blocks until the queue is drained and the file is synced to disk.
    void flush();

    /// Flush, stop the writer and close the file. Further calls fail.
    void close();

    std::size_t location_count();
    std::vector<int> location_ids();

    const std::filesystem::path& path() const { return path_; }

private:
    struct QueueItem {
        uint64_t ticket = 0;
        std::shared_ptr<const StoredLocation> loc;                  // kind: location
        std::shared_ptr<const std::vector<VisualWord>> bare_words;  // kind: words only
    };

    void writer_loop();
    void write_item_locked(const QueueItem& item);
    void append_record_locked(uint8_t kind, const std::string& payload);
    std::optional<StoredLocation> read_location_locked(long offset);
    std::optional<VisualWord> read_word_locked(long offset);
    std::string read_payload_locked(long offset, uint8_t expect_kind);
    void scan_existing_locked();
    void require_open() const;

    std::filesystem::path path_;
    StoreOptions options_;

    // Queue side: pending writes visible to fetch() before they hit disk.
    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<QueueItem> queue_;
    std::unordered_map<int, std::shared_ptr<const StoredLocation>> pending_locs_;
    std::unordered_map<int, std::shared_ptr<const VisualWord>> pending_words_;
    bool in_flight_ = false;
    bool stop_ = false;
    uint64_t next_ticket_ = 0;

    // File side.
    std::mutex file_mu_;
    std::FILE* file_ = nullptr;
    long end_offset_ = 0;
    std::unordered_map<int, long> loc_index_;
    std::unordered_map<int, long> word_index_;

    std::thread writer_;
    bool closed_ = false;
};

} // namespace loopgraph
