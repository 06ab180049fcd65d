#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>

#include "loopgraph/errors.hpp"
#include "loopgraph/rng.hpp"
#include "loopgraph/store.hpp"

using namespace loopgraph;

namespace {

std::filesystem::path temp_store(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "loopgraph_store_tests";
    std::filesystem::create_directories(dir);
    auto path = dir / name;
    std::filesystem::remove(path);
    return path;
}

StoredLocation sample_location(Rng& rng, int id) {
    StoredLocation loc;
    loc.location_id = id;
    loc.weight = static_cast<int>(rng.uniform_u32(10));
    loc.created_at = id;
    const int words = 1 + static_cast<int>(rng.uniform_u32(6));
    for (int w = 0; w < words; ++w) {
        loc.signature.add(id * 100 + w, 1 + static_cast<int>(rng.uniform_u32(3)));
    }
    loc.links.insert(id + 1);
    if (id > 0) loc.links.insert(id - 1);
    loc.member_images = {id, id + 1000};
    const int orphans = static_cast<int>(rng.uniform_u32(3));
    for (int w = 0; w < orphans; ++w) {
        VisualWord word;
        word.id = id * 100 + w;
        word.descriptor = {static_cast<float>(rng.uniform01()), static_cast<float>(rng.uniform01())};
        loc.orphaned_words.push_back(std::move(word));
    }
    return loc;
}

} // namespace

TEST_CASE("persist then fetch returns an equal record") {
    Store store(temp_store("roundtrip.lgdb"));
    Rng rng(1);
    const auto loc = sample_location(rng, 7);
    store.persist(loc);

    SUBCASE("through the queue") {
        const auto got = store.fetch(7);
        REQUIRE(got.has_value());
        CHECK(*got == loc);
    }
    SUBCASE("from disk after a flush") {
        store.flush();
        const auto got = store.fetch(7);
        REQUIRE(got.has_value());
        CHECK(*got == loc);
    }
}

TEST_CASE("fetching an id that was never persisted yields nothing") {
    Store store(temp_store("notfound.lgdb"));
    CHECK_FALSE(store.fetch(42).has_value());
    CHECK_FALSE(store.fetch_word(42).has_value());
}

TEST_CASE("a thousand locations survive close and reopen, field-identical") {
    const auto path = temp_store("reopen.lgdb");
    Rng rng(2);
    std::vector<StoredLocation> originals;
    {
        Store store(path);
        for (int i = 0; i < 1000; ++i) {
            originals.push_back(sample_location(rng, i));
            store.persist(originals.back());
        }
        store.flush();
        store.close();
    }
    Store reopened(path);
    CHECK(reopened.location_count() == 1000);
    for (const auto& loc : originals) {
        const auto got = reopened.fetch(loc.location_id);
        REQUIRE(got.has_value());
        CHECK(*got == loc);
    }
}

TEST_CASE("later versions of a location win across reopen") {
    const auto path = temp_store("versions.lgdb");
    Rng rng(3);
    auto loc = sample_location(rng, 5);
    {
        Store store(path);
        store.persist(loc);
        loc.weight += 11;
        store.persist(loc);
        store.flush();
    }
    Store reopened(path);
    const auto got = reopened.fetch(5);
    REQUIRE(got.has_value());
    CHECK(got->weight == loc.weight);
    CHECK(reopened.location_count() == 1);
}

TEST_CASE("rewrite with an empty mapping touches nothing") {
    Store store(temp_store("rewrite0.lgdb"));
    Rng rng(4);
    store.persist(sample_location(rng, 0));
    CHECK(store.rewrite_word_refs({}) == 0);
}

TEST_CASE("rewrite replaces word ids inside stored signatures") {
    Store store(temp_store("rewrite1.lgdb"));
    StoredLocation loc;
    loc.location_id = 3;
    loc.signature.add(7, 2);
    loc.signature.add(9, 1);
    store.persist(loc);

    CHECK(store.rewrite_word_refs({{7, 12}}) == 1);
    const auto got = store.fetch(3);
    REQUIRE(got.has_value());
    CHECK(got->signature.counts().count(7) == 0);
    CHECK(got->signature.counts().at(12) == 2);
    CHECK(got->signature.counts().at(9) == 1);
}

TEST_CASE("rewrite merges multiplicities when ids collide") {
    Store store(temp_store("rewrite2.lgdb"));
    StoredLocation loc;
    loc.location_id = 1;
    loc.signature.add(7, 2);
    loc.signature.add(12, 1);
    store.persist(loc);
    CHECK(store.rewrite_word_refs({{7, 12}}) == 1);
    const auto got = store.fetch(1);
    REQUIRE(got.has_value());
    CHECK(got->signature.counts().at(12) == 3);
    CHECK(got->signature.total() == 3);
}

TEST_CASE("rewrite touch count matches a full scan") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        Store store(temp_store("rewrite_scan.lgdb"));
        std::vector<StoredLocation> locs;
        for (int i = 0; i < 40; ++i) {
            locs.push_back(sample_location(rng, i));
            store.persist(locs.back());
        }
        std::map<int, int> mapping;
        for (int m = 0; m < 12; ++m) {
            const int old_id = static_cast<int>(rng.uniform_u32(40)) * 100 +
                               static_cast<int>(rng.uniform_u32(6));
            mapping[old_id] = 900000 + m;
        }
        std::size_t expected = 0;
        for (const auto& loc : locs) {
            for (const auto& [wid, n] : loc.signature.counts()) {
                if (mapping.count(wid)) {
                    ++expected;
                    break;
                }
            }
        }
        CHECK(store.rewrite_word_refs(mapping) == expected);
        // And the rewrite really applied everywhere.
        for (const auto& loc : locs) {
            const auto got = store.fetch(loc.location_id);
            REQUIRE(got.has_value());
            for (const auto& [wid, n] : got->signature.counts()) {
                CHECK(mapping.count(wid) == 0);
            }
            CHECK(got->signature.total() == loc.signature.total());
        }
    }
}

TEST_CASE("rewritten words lose their stored descriptors") {
    Store store(temp_store("tombstone.lgdb"));
    VisualWord w;
    w.id = 77;
    w.descriptor = {1.f, 2.f};
    store.persist_words({w});
    store.flush();
    REQUIRE(store.fetch_word(77).has_value());

    StoredLocation loc;
    loc.location_id = 0;
    loc.signature.add(77, 1);
    store.persist(loc);
    store.rewrite_word_refs({{77, 5}});
    CHECK_FALSE(store.fetch_word(77).has_value());
}

TEST_CASE("carried orphan words are fetchable and ride along with the record") {
    const auto path = temp_store("orphans.lgdb");
    {
        Store store(path);
        StoredLocation loc;
        loc.location_id = 9;
        loc.signature.add(70, 1);
        VisualWord w;
        w.id = 70;
        w.descriptor = {3.f, 4.f, 5.f};
        loc.orphaned_words.push_back(w);
        store.persist(loc);

        const auto word = store.fetch_word(70); // via the queue
        REQUIRE(word.has_value());
        CHECK(word->descriptor == std::vector<float>({3.f, 4.f, 5.f}));
        store.flush();
    }
    Store reopened(path);
    const auto word = reopened.fetch_word(70);
    REQUIRE(word.has_value());
    CHECK(word->descriptor == std::vector<float>({3.f, 4.f, 5.f}));
    const auto rec = reopened.fetch(9);
    REQUIRE(rec.has_value());
    REQUIRE(rec->orphaned_words.size() == 1);
    CHECK(rec->orphaned_words[0].id == 70);
}

TEST_CASE("reads observe queued writes while the writer is slow") {
    StoreOptions options;
    options.artificial_write_delay = std::chrono::milliseconds(50);
    Store store(temp_store("slow.lgdb"), options);
    Rng rng(6);

    for (int i = 0; i < 20; ++i) {
        const auto loc = sample_location(rng, i);
        const auto t0 = std::chrono::steady_clock::now();
        store.persist(loc);
        const double enqueue_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        CHECK(enqueue_s < 0.002);

        const auto got = store.fetch(i); // must be visible before any flush
        REQUIRE(got.has_value());
        CHECK(*got == loc);
    }
    store.flush();
    CHECK(store.location_count() == 20);
}

TEST_CASE("a full queue blocks the producer instead of dropping writes") {
    StoreOptions options;
    options.queue_capacity = 2;
    options.artificial_write_delay = std::chrono::milliseconds(5);
    Store store(temp_store("backpressure.lgdb"), options);
    Rng rng(7);
    for (int i = 0; i < 12; ++i) {
        store.persist(sample_location(rng, i)); // some of these must wait
    }
    store.flush();
    CHECK(store.location_count() == 12);
}

TEST_CASE("a torn tail is discarded on open, intact records survive") {
    const auto path = temp_store("torn.lgdb");
    Rng rng(8);
    std::vector<StoredLocation> locs;
    {
        Store store(path);
        for (int i = 0; i < 5; ++i) {
            locs.push_back(sample_location(rng, i));
            store.persist(locs.back());
        }
        store.flush();
    }
    {
        std::ofstream f(path, std::ios::binary | std::ios::app);
        f << "\x01garbage-without-proper-framing";
    }
    Store reopened(path);
    CHECK(reopened.location_count() == 5);
    for (const auto& loc : locs) {
        const auto got = reopened.fetch(loc.location_id);
        REQUIRE(got.has_value());
        CHECK(*got == loc);
    }
}

TEST_CASE("operations after close fail loudly") {
    Store store(temp_store("closed.lgdb"));
    store.close();
    CHECK_THROWS_AS(store.fetch(0), IoError);
    CHECK_THROWS_AS(store.persist(StoredLocation{}), IoError);
}

TEST_CASE("opening a non-store file is rejected") {
    const auto path = temp_store("bogus.lgdb");
    std::ofstream(path) << "definitely not a store";
    CHECK_THROWS_AS(Store{path}, IoError);
}
