#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "loopgraph/errors.hpp"
#include "loopgraph/eval.hpp"
#include "loopgraph/pipeline.hpp"
#include "loopgraph/stream_io.hpp"
#include "loopgraph/synthetic.hpp"
#include "loopgraph/version.hpp"

namespace {

using nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

double parse_ttime(const std::string& text) {
    if (text == "inf" || text == "infinity") return std::numeric_limits<double>::infinity();
    try {
        return std::stod(text);
    } catch (const std::exception&) {
        throw loopgraph::ConfigError("bad --ttime value '" + text + "' (seconds or \"inf\")");
    }
}

// Flat key=value pipeline config; command-line flags override these keys.
void apply_config_file(loopgraph::PipelineConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw loopgraph::ConfigError("cannot open config: " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "ttime") cfg.t_time = parse_ttime(value);
            else if (key == "t_rehearsal") cfg.t_rehearsal = std::stod(value);
            else if (key == "t_loop") cfg.t_loop = std::stod(value);
            else if (key == "t_min_hyp") cfg.t_min_hyp = std::stoi(value);
            else if (key == "stm_size") cfg.stm_size = std::stoi(value);
            else if (key == "match_ratio") cfg.match_ratio = std::stof(value);
            else if (key == "gaussian_sigma") cfg.gaussian_sigma = std::stod(value);
            else if (key == "max_retrieved") cfg.max_retrieved = std::stoi(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "clock") cfg.use_virtual_clock = (value == "virtual");
            else throw loopgraph::ConfigError(path.string() + ":" + std::to_string(line_no) +
                                              ": unknown key '" + key + "'");
        } catch (const loopgraph::ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw loopgraph::ConfigError(path.string() + ":" + std::to_string(line_no) +
                                         ": bad value for '" + key + "'");
        }
    }
}

json config_to_json(const loopgraph::PipelineConfig& cfg) {
    json j;
    j["ttime"] = std::isfinite(cfg.t_time) ? json(cfg.t_time) : json("inf");
    j["t_rehearsal"] = cfg.t_rehearsal;
    j["t_loop"] = cfg.t_loop;
    j["t_min_hyp"] = cfg.t_min_hyp;
    j["stm_size"] = cfg.stm_size;
    j["match_ratio"] = cfg.match_ratio;
    j["gaussian_sigma"] = cfg.gaussian_sigma;
    j["neighbor_range"] = cfg.neighbor_range;
    j["max_retrieved"] = cfg.max_retrieved;
    j["seed"] = cfg.seed;
    j["clock"] = cfg.use_virtual_clock ? "virtual" : "wall";
    return j;
}

struct RunArgs {
    std::string input;
    std::string gt;
    std::string config;
    std::string ttime;
    std::string out = "out";
    std::string clock;
    std::optional<uint64_t> seed;
};

loopgraph::PipelineConfig build_config(const RunArgs& args) {
    loopgraph::PipelineConfig cfg;
    if (!args.config.empty()) apply_config_file(cfg, args.config);
    if (!args.ttime.empty()) cfg.t_time = parse_ttime(args.ttime);
    if (!args.clock.empty()) {
        if (args.clock != "wall" && args.clock != "virtual") {
            throw loopgraph::ConfigError("--clock must be 'wall' or 'virtual'");
        }
        cfg.use_virtual_clock = args.clock == "virtual";
    }
    if (args.seed) cfg.seed = *args.seed;
    cfg.validate();
    return cfg;
}

void require_input_file(const std::string& path) {
    if (!std::filesystem::exists(path)) {
        throw loopgraph::ConfigError("input file does not exist: " + path);
    }
}

int cmd_run(const RunArgs& args) {
    require_input_file(args.input);
    if (!args.gt.empty()) require_input_file(args.gt);
    const loopgraph::PipelineConfig cfg = build_config(args);

    const std::filesystem::path out_dir(args.out);
    std::filesystem::create_directories(out_dir);

    json manifest;
    manifest["tool"] = "loopgraph";
    manifest["version"] = loopgraph::kVersion;
    manifest["input"] = args.input;
    manifest["ground_truth"] = args.gt;
    manifest["output_dir"] = args.out;
    manifest["seed"] = cfg.seed;
    manifest["config"] = config_to_json(cfg);
    {
        std::ofstream mf(out_dir / "manifest.json");
        mf << manifest.dump(2) << '\n';
        if (!mf) throw loopgraph::IoError("cannot write manifest");
    }

    const auto frames = loopgraph::load_stream(args.input);
    const auto store_path = out_dir / "ltm.lgdb";
    std::filesystem::remove(store_path);
    loopgraph::Store store(store_path);
    const loopgraph::RunResult rr = loopgraph::run(frames, cfg, store);
    store.flush();

    {
        std::ofstream csv(out_dir / "iterations.csv");
        loopgraph::write_iteration_csv(csv, rr.reports);
        if (!csv) throw loopgraph::IoError("cannot write iterations.csv");
    }
    {
        std::ofstream log(out_dir / "detections.log");
        loopgraph::write_detection_log(log, rr.detections);
        if (!log) throw loopgraph::IoError("cannot write detections.log");
    }

    std::cout << "processed " << rr.reports.size() << " images, " << rr.detections.size()
              << " loop closures accepted\n";
    if (!rr.reports.empty()) {
        const auto t = loopgraph::timing_summary(rr.reports);
        std::cout << "iteration time: mean " << t.mean_s << " s, p95 " << t.p95_s << " s, max "
                  << t.max_s << " s; max WM " << t.max_wm << ", max dictionary " << t.max_dictionary
                  << "\n";
    }
    if (!args.gt.empty()) {
        const auto gt = loopgraph::load_ground_truth(args.gt);
        const auto pr = loopgraph::score(rr.detections, gt, cfg.t_loop);
        std::cout << "precision " << pr.precision << ", recall " << pr.recall << " (tp " << pr.tp
                  << ", fp " << pr.fp << ", gt " << pr.gt_count << ")\n";
    }
    return 0;
}

int cmd_generate(const std::string& config_path, const std::string& out_base) {
    const auto cfg = loopgraph::SyntheticWorldConfig::from_file(config_path);
    const auto world = loopgraph::generate_synthetic(cfg);
    const std::filesystem::path base(out_base);
    if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
    loopgraph::write_stream(base.string() + ".lgds", world.frames, cfg.dim);
    loopgraph::write_ground_truth(base.string() + ".gt", world.ground_truth);
    std::cout << "wrote " << world.frames.size() << " frames to " << base.string() << ".lgds, "
              << world.ground_truth.size() << " ground-truth pairs to " << base.string() << ".gt\n";
    return 0;
}

int cmd_sweep(const RunArgs& args, const std::string& thresholds_text, const std::string& mode,
              bool plot) {
    require_input_file(args.input);
    require_input_file(args.gt);
    const loopgraph::PipelineConfig cfg = build_config(args);
    const auto thresholds = loopgraph::parse_thresholds(thresholds_text);
    const auto frames = loopgraph::load_stream(args.input);
    const auto gt = loopgraph::load_ground_truth(args.gt);

    const std::filesystem::path out_dir(args.out);
    std::filesystem::create_directories(out_dir);

    std::vector<loopgraph::PRPoint> points;
    if (mode == "replay") {
        const auto store_path = out_dir / "sweep_trace.lgdb";
        std::filesystem::remove(store_path);
        loopgraph::Store store(store_path);
        const auto rr = loopgraph::run(frames, cfg, store);
        points = loopgraph::pr_sweep_replay(rr.trace, gt, thresholds, cfg.t_min_hyp);
    } else if (mode == "rerun") {
        points = loopgraph::pr_sweep_rerun(frames, cfg, gt, thresholds, out_dir / "sweep_scratch");
    } else {
        throw loopgraph::ConfigError("--mode must be 'replay' or 'rerun'");
    }

    {
        std::ofstream csv(out_dir / "pr_curve.csv");
        loopgraph::write_pr_csv(csv, points);
        if (!csv) throw loopgraph::IoError("cannot write pr_curve.csv");
    }
    if (plot) loopgraph::write_pr_svg(out_dir / "pr_curve.svg", points);

    for (const auto& p : points) {
        std::cout << "threshold " << p.threshold << ": precision " << p.precision << ", recall "
                  << p.recall << " (tp " << p.tp << ", fp " << p.fp << ")\n";
    }
    return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& gt_path, bool plot) {
    const std::filesystem::path dir(run_dir);
    require_input_file((dir / "detections.log").string());
    require_input_file(gt_path);
    const auto detections = loopgraph::load_detection_log(dir / "detections.log");
    const auto gt = loopgraph::load_ground_truth(gt_path);
    const auto pr = loopgraph::score(detections, gt);

    std::cout << "precision " << pr.precision << ", recall " << pr.recall << " (tp " << pr.tp
              << ", fp " << pr.fp << ", gt " << pr.gt_count << ")\n";

    std::vector<loopgraph::IterationReport> reports;
    if (std::filesystem::exists(dir / "iterations.csv")) {
        reports = loopgraph::load_iteration_csv(dir / "iterations.csv");
        if (!reports.empty()) {
            const auto t = loopgraph::timing_summary(reports);
            std::cout << "iteration time: mean " << t.mean_s << " s, p95 " << t.p95_s << " s, max "
                      << t.max_s << " s; max WM " << t.max_wm << ", max dictionary "
                      << t.max_dictionary << "\n";
        }
    }

    {
        std::ofstream csv(dir / "eval.csv");
        loopgraph::write_pr_csv(csv, {pr});
        if (!csv) throw loopgraph::IoError("cannot write eval.csv");
    }
    if (plot && !reports.empty()) {
        loopgraph::write_timing_svg(dir / "timing.svg", reports,
                                    std::numeric_limits<double>::infinity());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"loopgraph: appearance-based loop-closure detection with tiered memory"};
    app.set_version_flag("--version", loopgraph::kVersion);
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "process a descriptor stream");
    run_cmd->add_option("--input", run_args.input, "descriptor stream (.lgds)")->required();
    run_cmd->add_option("--gt", run_args.gt, "ground-truth pairs (.gt)");
    run_cmd->add_option("--config", run_args.config, "key=value pipeline config");
    run_cmd->add_option("--ttime", run_args.ttime, "time budget in seconds, or 'inf'");
    run_cmd->add_option("--out", run_args.out, "output directory");
    run_cmd->add_option("--clock", run_args.clock, "wall or virtual");
    run_cmd->add_option("--seed", run_args.seed, "rng seed");

    std::string gen_config, gen_out = "synthetic";
    auto* gen_cmd = app.add_subcommand("generate", "generate a synthetic stream + ground truth");
    gen_cmd->add_option("--config", gen_config, "synthetic world config")->required();
    gen_cmd->add_option("--out", gen_out, "output base path (writes .lgds and .gt)");

    RunArgs sweep_args;
    std::string thresholds = "0.05,0.1,...,0.9";
    std::string mode = "replay";
    bool sweep_plot = false;
    auto* sweep_cmd = app.add_subcommand("sweep", "precision-recall curve over loop thresholds");
    sweep_cmd->add_option("--input", sweep_args.input, "descriptor stream (.lgds)")->required();
    sweep_cmd->add_option("--gt", sweep_args.gt, "ground-truth pairs (.gt)")->required();
    sweep_cmd->add_option("--config", sweep_args.config, "key=value pipeline config");
    sweep_cmd->add_option("--ttime", sweep_args.ttime, "time budget in seconds, or 'inf'");
    sweep_cmd->add_option("--out", sweep_args.out, "output directory");
    sweep_cmd->add_option("--clock", sweep_args.clock, "wall or virtual");
    sweep_cmd->add_option("--seed", sweep_args.seed, "rng seed");
    sweep_cmd->add_option("--thresholds", thresholds, "comma list; '...' continues the step");
    sweep_cmd->add_option("--mode", mode, "replay (default) or rerun");
    sweep_cmd->add_flag("--plot", sweep_plot, "write pr_curve.svg");

    std::string eval_run, eval_gt;
    bool eval_plot = false;
    auto* eval_cmd = app.add_subcommand("eval", "score an existing run directory");
    eval_cmd->add_option("--run", eval_run, "run directory")->required();
    eval_cmd->add_option("--gt", eval_gt, "ground-truth pairs (.gt)")->required();
    eval_cmd->add_flag("--plot", eval_plot, "write timing.svg");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (*run_cmd) return cmd_run(run_args);
        if (*gen_cmd) return cmd_generate(gen_config, gen_out);
        if (*sweep_cmd) return cmd_sweep(sweep_args, thresholds, mode, sweep_plot);
        if (*eval_cmd) return cmd_eval(eval_run, eval_gt, eval_plot);
    } catch (const loopgraph::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
