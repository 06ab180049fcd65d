#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "loopgraph/errors.hpp"
#include "loopgraph/eval.hpp"
#include "loopgraph/rng.hpp"
#include "loopgraph/synthetic.hpp"

using namespace loopgraph;

namespace {

DetectionEntry det(int query, std::vector<int> matched, double p = 0.5) {
    DetectionEntry d;
    d.query_image = query;
    d.matched_images = std::move(matched);
    d.probability = p;
    return d;
}

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "loopgraph_eval_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("no detections against a nonempty ground truth") {
    GroundTruth gt;
    gt.add(0, 10);
    gt.add(1, 11);
    const auto p = score({}, gt);
    CHECK(p.precision == 1.0); // vacuous
    CHECK(p.recall == 0.0);
    CHECK(p.tp == 0);
    CHECK(p.fp == 0);
    CHECK(p.gt_count == 2);
}

TEST_CASE("perfect detections cover the ground truth") {
    GroundTruth gt;
    gt.add(0, 10);
    gt.add(1, 11);
    const auto p = score({det(10, {0}), det(11, {5, 1})}, gt);
    CHECK(p.precision == 1.0);
    CHECK(p.recall == 1.0);
    CHECK(p.tp == 2);
    CHECK(p.fp == 0);
}

TEST_CASE("a wrong match counts against precision only") {
    GroundTruth gt;
    gt.add(0, 10);
    gt.add(1, 11);
    const auto p = score({det(10, {3})}, gt);
    CHECK(p.tp == 0);
    CHECK(p.fp == 1);
    CHECK(p.precision == 0.0);
    CHECK(p.recall == 0.0);
}

TEST_CASE("scoring is invariant to detection order and matches a naive scorer") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        GroundTruth gt;
        for (int i = 0; i < 15; ++i) {
            const int a = static_cast<int>(rng.uniform_u32(30));
            const int b = static_cast<int>(rng.uniform_u32(30));
            gt.add(a, b);
        }
        std::vector<DetectionEntry> detections;
        for (int q = 0; q < 25; ++q) {
            if (rng.uniform01() < 0.5) continue;
            std::vector<int> matched;
            for (int m = 0; m < 3; ++m) {
                if (rng.uniform01() < 0.6) matched.push_back(static_cast<int>(rng.uniform_u32(30)));
            }
            if (!matched.empty()) detections.push_back(det(q, matched));
        }

        // Naive scorer: straight set membership, one verdict per query.
        int tp = 0, fp = 0;
        for (const auto& d : detections) {
            bool hit = false;
            for (int m : d.matched_images) {
                if (gt.contains(d.query_image, m)) hit = true;
            }
            hit ? ++tp : ++fp;
        }
        const auto expected_queries = gt.query_images();

        const auto p = score(detections, gt);
        CHECK(p.tp == tp);
        CHECK(p.fp == fp);
        CHECK(p.gt_count == static_cast<int>(expected_queries.size()));

        auto shuffled = detections;
        std::reverse(shuffled.begin(), shuffled.end());
        const auto p2 = score(shuffled, gt);
        CHECK(p2.tp == p.tp);
        CHECK(p2.fp == p.fp);
        CHECK(p2.precision == p.precision);
        CHECK(p2.recall == p.recall);
    }
}

TEST_CASE("threshold parsing with step continuation") {
    const auto plain = parse_thresholds("0.1,0.2,0.5");
    REQUIRE(plain.size() == 3);
    CHECK(plain[1] == doctest::Approx(0.2));

    const auto expanded = parse_thresholds("0.05,0.1,...,0.9");
    REQUIRE(expanded.size() == 18);
    CHECK(expanded.front() == doctest::Approx(0.05));
    CHECK(expanded[1] == doctest::Approx(0.10));
    CHECK(expanded.back() == doctest::Approx(0.9));

    CHECK_THROWS_AS(parse_thresholds(""), ConfigError);
    CHECK_THROWS_AS(parse_thresholds("0.5,..."), ConfigError);
    CHECK_THROWS_AS(parse_thresholds("...,0.5"), ConfigError);
    CHECK_THROWS_AS(parse_thresholds("0,0.5"), ConfigError);
    CHECK_THROWS_AS(parse_thresholds("abc"), ConfigError);
}

TEST_CASE("replay sweep filters the trace by threshold") {
    GroundTruth gt;
    gt.add(0, 20);
    gt.add(1, 21);
    gt.add(2, 22);

    std::vector<HypothesisSample> trace;
    auto sample = [](int img, int loc, double p, int n_wm, std::vector<int> members) {
        HypothesisSample s;
        s.image_id = img;
        s.location_id = loc;
        s.probability = p;
        s.n_wm = n_wm;
        s.matched_images = std::move(members);
        return s;
    };
    trace.push_back(sample(20, 0, 0.45, 20, {0}));
    trace.push_back(sample(21, 1, 0.25, 20, {1}));
    trace.push_back(sample(22, 2, 0.10, 20, {2}));
    trace.push_back(sample(23, 3, 0.90, 5, {3}));  // below the min-hypotheses gate
    trace.push_back(sample(24, -1, 0.0, 20, {})); // no hypothesis at all

    const auto points = pr_sweep_replay(trace, gt, {0.05, 0.2, 0.4, 1.0}, 15);
    REQUIRE(points.size() == 4);

    CHECK(points[0].tp == 3); // 0.45, 0.25, 0.10 all pass at 0.05
    CHECK(points[1].tp == 2);
    CHECK(points[2].tp == 1);
    CHECK(points[3].tp == 0); // nothing exceeds 1.0
    CHECK(points[3].fp == 0);
    CHECK(points[3].precision == 1.0);

    // Detection counts never increase with the threshold.
    for (std::size_t i = 1; i < points.size(); ++i) {
        CHECK(points[i].tp + points[i].fp <= points[i - 1].tp + points[i - 1].fp);
    }

    // Replays are pure: running again gives the identical curve.
    const auto again = pr_sweep_replay(trace, gt, {0.05, 0.2, 0.4, 1.0}, 15);
    for (std::size_t i = 0; i < points.size(); ++i) {
        CHECK(points[i].precision == again[i].precision);
        CHECK(points[i].recall == again[i].recall);
    }
}

TEST_CASE("replay and rerun sweeps agree on the benchmark world") {
    SyntheticWorldConfig world_cfg;
    world_cfg.num_places = 20;
    world_cfg.words_per_place = 100;
    world_cfg.dim = 32;
    world_cfg.revisit_script = parse_revisit_script("0..19 x 2");
    world_cfg.noise_sigma = 0.01;
    world_cfg.aliasing_rate = 0.08;
    world_cfg.seed = 12;
    const auto world = generate_synthetic(world_cfg);

    PipelineConfig cfg;
    cfg.use_virtual_clock = true;
    cfg.stm_size = 2;
    // Replay approximates the acceptance feedback of the recording run, so
    // agreement is asserted around the recorded operating point; far-off
    // thresholds are where the rerun mode exists in the first place.
    const std::vector<double> thresholds{0.05, 0.10, 0.15};

    Store store(temp_dir() / "replay_trace.lgdb");
    const auto rr = run(world.frames, cfg, store);
    const auto replay = pr_sweep_replay(rr.trace, world.ground_truth, thresholds, cfg.t_min_hyp);
    const auto rerun = pr_sweep_rerun(world.frames, cfg, world.ground_truth, thresholds,
                                      temp_dir() / "rerun_scratch");

    REQUIRE(replay.size() == rerun.size());
    for (std::size_t i = 0; i < replay.size(); ++i) {
        CHECK(std::abs(replay[i].recall - rerun[i].recall) <= 0.05);
    }
}

TEST_CASE("timing summary") {
    SUBCASE("single report") {
        IterationReport r;
        r.elapsed = 0.3;
        const auto t = timing_summary({r});
        CHECK(t.max_s == doctest::Approx(0.3));
        CHECK(t.mean_s == doctest::Approx(0.3));
        CHECK(t.p95_s == doctest::Approx(0.3));
    }
    SUBCASE("constant sequence pins the percentile") {
        std::vector<IterationReport> reports(40);
        for (auto& r : reports) r.elapsed = 0.125;
        const auto t = timing_summary(reports);
        CHECK(t.p95_s == doctest::Approx(0.125));
        CHECK(t.mean_s == doctest::Approx(0.125));
    }
    SUBCASE("random sequence against a sort-based oracle") {
        Rng rng(9);
        std::vector<IterationReport> reports(137);
        std::vector<double> elapsed;
        double sum = 0.0;
        int max_wm = 0, max_dict = 0;
        for (auto& r : reports) {
            r.elapsed = rng.uniform01();
            r.wm_size = static_cast<int>(rng.uniform_u32(500));
            r.dictionary_size = static_cast<int>(rng.uniform_u32(5000));
            elapsed.push_back(r.elapsed);
            sum += r.elapsed;
            max_wm = std::max(max_wm, r.wm_size);
            max_dict = std::max(max_dict, r.dictionary_size);
        }
        std::sort(elapsed.begin(), elapsed.end());
        const auto t = timing_summary(reports);
        CHECK(t.max_s == doctest::Approx(elapsed.back()));
        CHECK(t.mean_s == doctest::Approx(sum / 137.0));
        CHECK(t.p95_s == doctest::Approx(elapsed[static_cast<std::size_t>(std::ceil(0.95 * 137)) - 1]));
        CHECK(t.max_wm == max_wm);
        CHECK(t.max_dictionary == max_dict);
    }
    SUBCASE("empty input is an error") {
        CHECK_THROWS_AS(timing_summary({}), Error);
    }
}

TEST_CASE("csv and svg emission") {
    std::vector<PRPoint> points;
    PRPoint p;
    p.threshold = 0.1;
    p.precision = 1.0;
    p.recall = 0.8;
    p.tp = 8;
    p.fp = 0;
    p.gt_count = 10;
    points.push_back(p);

    std::ostringstream csv;
    write_pr_csv(csv, points);
    CHECK(csv.str().find("threshold,precision,recall,tp,fp,gt_count") == 0);
    CHECK(csv.str().find("0.1,1,0.8,8,0,10") != std::string::npos);

    const auto svg_path = temp_dir() / "pr.svg";
    write_pr_svg(svg_path, points);
    std::ifstream in(svg_path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content.find("<svg") == 0);
    CHECK(content.find("polyline") != std::string::npos);
}
