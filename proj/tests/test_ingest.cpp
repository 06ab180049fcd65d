#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "loopgraph/errors.hpp"
#include "loopgraph/rng.hpp"
#include "loopgraph/stream_io.hpp"
#include "loopgraph/synthetic.hpp"

using namespace loopgraph;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "loopgraph_ingest_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<DescriptorSet> random_sets(uint64_t seed, int images, int dim) {
    Rng rng(seed);
    std::vector<DescriptorSet> sets(static_cast<std::size_t>(images));
    for (int i = 0; i < images; ++i) {
        sets[static_cast<std::size_t>(i)].image_id = i;
        sets[static_cast<std::size_t>(i)].acquisition_stamp = static_cast<double>(i);
        const int count = static_cast<int>(rng.uniform_u32(6)); // empty sets included
        for (int c = 0; c < count; ++c) {
            Descriptor d(static_cast<std::size_t>(dim));
            for (auto& v : d) v = static_cast<float>(rng.uniform01());
            sets[static_cast<std::size_t>(i)].descriptors.push_back(std::move(d));
        }
    }
    return sets;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("stream round trip, two images with counts {2,0}") {
    std::vector<DescriptorSet> sets(2);
    sets[0].image_id = 0;
    sets[0].descriptors = {{1.f, 2.f, 3.f, 4.f}, {5.f, 6.f, 7.f, 8.f}};
    sets[1].image_id = 1;

    const auto path = temp_file("two_images.lgds");
    write_stream(path, sets, 4);
    const auto loaded = load_stream(path);

    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].descriptors == sets[0].descriptors);
    CHECK(loaded[1].descriptors.empty());
    CHECK(loaded[0].image_id == 0);
    CHECK(loaded[1].image_id == 1);
}

TEST_CASE("stream round trip on randomized content") {
    for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const auto sets = random_sets(seed, 12, 8);
        const auto path = temp_file("roundtrip.lgds");
        write_stream(path, sets, 8);
        const auto loaded = load_stream(path);
        REQUIRE(loaded.size() == sets.size());
        for (std::size_t i = 0; i < sets.size(); ++i) {
            CHECK(loaded[i].image_id == sets[i].image_id);
            CHECK(loaded[i].descriptors == sets[i].descriptors);
        }
    }
}

TEST_CASE("write rejects mixed dimensions") {
    std::vector<DescriptorSet> sets(2);
    sets[0].descriptors = {{1.f, 2.f, 3.f, 4.f}};
    sets[1].descriptors = {{1.f, 2.f, 3.f, 4.f, 5.f, 6.f, 7.f, 8.f}};
    CHECK_THROWS_AS(write_stream(temp_file("mixed.lgds"), sets), IoError);
}

TEST_CASE("write rejects non-finite values") {
    std::vector<DescriptorSet> sets(1);
    sets[0].descriptors = {{1.f, std::numeric_limits<float>::infinity()}};
    CHECK_THROWS_AS(write_stream(temp_file("nonfinite.lgds"), sets), IoError);
}

TEST_CASE("loader reports byte offsets for corrupt content") {
    std::vector<DescriptorSet> sets(1);
    sets[0].descriptors = {{1.f, 2.f, 3.f, 4.f}, {5.f, 6.f, 7.f, 8.f}};
    const auto path = temp_file("corrupt.lgds");
    write_stream(path, sets, 4);

    SUBCASE("truncated descriptor data") {
        std::string bytes = slurp(path);
        bytes.resize(bytes.size() - 6);
        std::ofstream(path, std::ios::binary) << bytes;
        try {
            load_stream(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
        }
    }
    SUBCASE("non-finite payload") {
        std::string bytes = slurp(path);
        const uint32_t nan = 0x7fc00000u;
        bytes.replace(20, 4, reinterpret_cast<const char*>(&nan), 4);
        std::ofstream(path, std::ios::binary) << bytes;
        try {
            load_stream(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
        }
    }
    SUBCASE("bad magic") {
        std::string bytes = slurp(path);
        bytes[0] = 'X';
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_AS(load_stream(path), IoError);
    }
}

TEST_CASE("zero-noise revisit produces identical frames and the expected pair") {
    SyntheticWorldConfig cfg;
    cfg.num_places = 2;
    cfg.words_per_place = 5;
    cfg.dim = 4;
    cfg.revisit_script = {0, 1, 0};
    cfg.seed = 7;

    const auto world = generate_synthetic(cfg);
    REQUIRE(world.frames.size() == 3);
    CHECK(world.frames[0].descriptors == world.frames[2].descriptors);
    CHECK(world.ground_truth.size() == 1);
    CHECK(world.ground_truth.contains(2, 0));
}

TEST_CASE("no revisit means empty ground truth") {
    SyntheticWorldConfig cfg;
    cfg.num_places = 2;
    cfg.words_per_place = 3;
    cfg.dim = 4;
    cfg.revisit_script = {0, 1};
    cfg.noise_sigma = 0.1;
    cfg.dropout_rate = 0.2;
    const auto world = generate_synthetic(cfg);
    CHECK(world.ground_truth.empty());
}

TEST_CASE("ground truth matches an independent script walker") {
    SyntheticWorldConfig cfg;
    cfg.num_places = 3;
    cfg.words_per_place = 4;
    cfg.dim = 4;
    cfg.revisit_script = {0, 1, 2, 0, 1, 2};
    cfg.noise_sigma = 0.05;
    cfg.seed = 3;
    const auto world = generate_synthetic(cfg);

    GroundTruth expected;
    for (std::size_t t = 0; t < cfg.revisit_script.size(); ++t) {
        for (std::size_t e = 0; e < t; ++e) {
            if (cfg.revisit_script[e] == cfg.revisit_script[t]) {
                expected.add(static_cast<int>(e), static_cast<int>(t));
            }
        }
    }
    CHECK(world.ground_truth == expected);
    CHECK(world.ground_truth.size() == 3);
    CHECK(world.ground_truth.contains(3, 0));
    CHECK(world.ground_truth.contains(4, 1));
    CHECK(world.ground_truth.contains(5, 2));
}

TEST_CASE("ground-truth completeness on random scripts") {
    for (uint64_t seed : {11u, 12u, 13u}) {
        Rng rng(seed);
        SyntheticWorldConfig cfg;
        cfg.num_places = 4;
        cfg.words_per_place = 3;
        cfg.dim = 4;
        cfg.seed = seed;
        for (int t = 0; t < 30; ++t) {
            cfg.revisit_script.push_back(static_cast<int>(rng.uniform_u32(4)));
        }
        const auto world = generate_synthetic(cfg);

        std::size_t pair_count = 0;
        for (std::size_t t = 0; t < cfg.revisit_script.size(); ++t) {
            for (std::size_t e = 0; e < t; ++e) {
                if (cfg.revisit_script[e] == cfg.revisit_script[t]) ++pair_count;
            }
        }
        CHECK(world.ground_truth.size() == pair_count);
    }
}

TEST_CASE("generation is deterministic at the byte level") {
    SyntheticWorldConfig cfg;
    cfg.num_places = 3;
    cfg.words_per_place = 6;
    cfg.dim = 8;
    cfg.revisit_script = {0, 1, 2, 1, 0};
    cfg.noise_sigma = 0.07;
    cfg.dropout_rate = 0.3;
    cfg.aliasing_rate = 0.2;
    cfg.seed = 99;

    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    const auto pa = temp_file("det_a.lgds");
    const auto pb = temp_file("det_b.lgds");
    write_stream(pa, a.frames, cfg.dim);
    write_stream(pb, b.frames, cfg.dim);
    CHECK(slurp(pa) == slurp(pb));
    CHECK(a.ground_truth == b.ground_truth);
}

TEST_CASE("config validation") {
    SyntheticWorldConfig cfg;
    cfg.num_places = 2;
    cfg.words_per_place = 3;
    cfg.dim = 4;

    SUBCASE("script referencing a missing place") {
        cfg.revisit_script = {0, 2};
        CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
    }
    SUBCASE("num_places must be positive") {
        cfg.num_places = 0;
        CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
    }
    SUBCASE("dim lower bound") {
        cfg.dim = 1;
        CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
    }
}

TEST_CASE("revisit script parsing") {
    CHECK(parse_revisit_script("0,1,2") == std::vector<int>({0, 1, 2}));
    CHECK(parse_revisit_script("0..3") == std::vector<int>({0, 1, 2, 3}));
    CHECK(parse_revisit_script("0..2 x 2") == std::vector<int>({0, 1, 2, 0, 1, 2}));
    CHECK(parse_revisit_script("0..1 x2") == std::vector<int>({0, 1, 0, 1}));
    CHECK_THROWS_AS(parse_revisit_script("0..a"), ConfigError);
    CHECK_THROWS_AS(parse_revisit_script("1 x"), ConfigError);
    CHECK(parse_revisit_script("3..1") == std::vector<int>({3, 2, 1}));
}

TEST_CASE("synthetic config file round trip") {
    SyntheticWorldConfig cfg;
    cfg.num_places = 5;
    cfg.words_per_place = 7;
    cfg.dim = 16;
    cfg.revisit_script = parse_revisit_script("0..4 x 3");
    cfg.noise_sigma = 0.03;
    cfg.aliasing_rate = 0.15;
    cfg.seed = 42;

    const auto path = temp_file("world.cfg");
    cfg.to_file(path);
    const auto back = SyntheticWorldConfig::from_file(path);
    CHECK(back.num_places == cfg.num_places);
    CHECK(back.words_per_place == cfg.words_per_place);
    CHECK(back.dim == cfg.dim);
    CHECK(back.revisit_script == cfg.revisit_script);
    CHECK(back.noise_sigma == doctest::Approx(cfg.noise_sigma));
    CHECK(back.aliasing_rate == doctest::Approx(cfg.aliasing_rate));
    CHECK(back.seed == cfg.seed);
}

TEST_CASE("ground-truth text format round trip") {
    GroundTruth gt;
    gt.add(10, 3);
    gt.add(5, 12);
    gt.add(7, 7); // self pair ignored
    const auto path = temp_file("pairs.gt");
    write_ground_truth(path, gt);
    const auto back = load_ground_truth(path);
    CHECK(back == gt);
    CHECK(back.size() == 2);
}
