#include "loopgraph/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "loopgraph/errors.hpp"

namespace loopgraph {

PRPoint score(const std::vector<DetectionEntry>& detections, const GroundTruth& gt,
              double threshold_label) {
    PRPoint point;
    point.threshold = threshold_label;
    point.gt_count = static_cast<int>(gt.query_images().size());

    std::set<int> seen_queries;
    for (const auto& det : detections) {
        if (!seen_queries.insert(det.query_image).second) continue; // one verdict per query
        bool hit = false;
        for (int m : det.matched_images) {
            if (gt.contains(det.query_image, m)) {
                hit = true;
                break;
            }
        }
        if (hit) {
            ++point.tp;
        } else {
            ++point.fp;
        }
    }
    const int total = point.tp + point.fp;
    point.precision = total == 0 ? 1.0 : static_cast<double>(point.tp) / total;
    point.recall = point.gt_count == 0 ? 0.0 : static_cast<double>(point.tp) / point.gt_count;
    return point;
}

std::vector<PRPoint> pr_sweep_replay(const std::vector<HypothesisSample>& trace, const GroundTruth& gt,
                                     const std::vector<double>& thresholds, int t_min_hyp) {
    std::vector<PRPoint> points;
    points.reserve(thresholds.size());
    for (double threshold : thresholds) {
        std::vector<DetectionEntry> detections;
        for (const auto& sample : trace) {
            if (sample.location_id < 0 || sample.n_wm < t_min_hyp) continue;
            if (sample.probability > threshold) {
                DetectionEntry det;
                det.query_image = sample.image_id;
                det.location_id = sample.location_id;
                det.probability = sample.probability;
                det.matched_images = sample.matched_images;
                detections.push_back(std::move(det));
            }
        }
        points.push_back(score(detections, gt, threshold));
    }
    return points;
}

std::vector<PRPoint> pr_sweep_rerun(const std::vector<DescriptorSet>& frames, PipelineConfig config,
                                    const GroundTruth& gt, const std::vector<double>& thresholds,
                                    const std::filesystem::path& scratch_dir) {
    std::filesystem::create_directories(scratch_dir);
    std::vector<PRPoint> points;
    points.reserve(thresholds.size());
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        config.t_loop = thresholds[i];
        const auto store_path = scratch_dir / ("sweep_" + std::to_string(i) + ".lgdb");
        std::filesystem::remove(store_path);
        Store store(store_path);
        const RunResult rr = run(frames, config, store);
        points.push_back(score(rr.detections, gt, thresholds[i]));
    }
    return points;
}

TimingSummary timing_summary(const std::vector<IterationReport>& reports) {
    if (reports.empty()) {
        throw Error("timing_summary: no iteration reports");
    }
    TimingSummary summary;
    std::vector<double> elapsed;
    elapsed.reserve(reports.size());
    double sum = 0.0;
    for (const auto& r : reports) {
        elapsed.push_back(r.elapsed);
        sum += r.elapsed;
        summary.max_wm = std::max(summary.max_wm, r.wm_size);
        summary.max_dictionary = std::max(summary.max_dictionary, r.dictionary_size);
    }
    std::sort(elapsed.begin(), elapsed.end());
    summary.max_s = elapsed.back();
    summary.mean_s = sum / static_cast<double>(elapsed.size());
    const auto rank = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(elapsed.size())));
    summary.p95_s = elapsed[rank == 0 ? 0 : rank - 1];
    return summary;
}

std::vector<double> parse_thresholds(const std::string& text) {
    std::string norm = text;
    for (char& c : norm) {
        if (c == ',') c = ' ';
    }
    std::istringstream is(norm);
    std::vector<double> out;
    std::string tok;
    bool ellipsis = false;
    while (is >> tok) {
        if (tok == "...") {
            if (out.size() < 2) throw ConfigError("thresholds: '...' needs two leading values");
            ellipsis = true;
            continue;
        }
        double v = 0.0;
        try {
            v = std::stod(tok);
        } catch (const std::exception&) {
            throw ConfigError("thresholds: bad value '" + tok + "'");
        }
        if (ellipsis) {
            const double step = out[out.size() - 1] - out[out.size() - 2];
            if (step <= 0.0) throw ConfigError("thresholds: '...' needs an increasing step");
            for (double next = out.back() + step; next < v + step * 0.5; next += step) {
                out.push_back(next);
            }
            // Land exactly on the stated bound.
            if (!out.empty() && std::abs(out.back() - v) < step * 0.5) out.back() = v;
            ellipsis = false;
        } else {
            out.push_back(v);
        }
    }
    if (ellipsis) throw ConfigError("thresholds: dangling '...'");
    if (out.empty()) throw ConfigError("thresholds: empty list");
    for (double v : out) {
        if (v <= 0.0 || v > 1.0) throw ConfigError("thresholds must lie in (0,1]");
    }
    return out;
}

void write_pr_csv(std::ostream& out, const std::vector<PRPoint>& points) {
    out << "threshold,precision,recall,tp,fp,gt_count\n";
    char buf[96];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g", p.threshold, p.precision, p.recall);
        out << buf << ',' << p.tp << ',' << p.fp << ',' << p.gt_count << '\n';
    }
}

namespace {

struct SvgCanvas {
    std::ofstream out;
    double width, height, margin;

    SvgCanvas(const std::filesystem::path& path, double w, double h, double m)
        : out(path), width(w), height(h), margin(m) {
        if (!out) throw IoError("cannot create plot: " + path.string());
        out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n"
            << "<rect width='100%' height='100%' fill='white'/>\n";
    }

    double x(double unit) const { return margin + unit * (width - 2 * margin); }
    double y(double unit) const { return height - margin - unit * (height - 2 * margin); }

    void axes(const std::string& xlabel, const std::string& ylabel) {
        out << "<line x1='" << x(0) << "' y1='" << y(0) << "' x2='" << x(1) << "' y2='" << y(0)
            << "' stroke='black'/>\n"
            << "<line x1='" << x(0) << "' y1='" << y(0) << "' x2='" << x(0) << "' y2='" << y(1)
            << "' stroke='black'/>\n"
            << "<text x='" << x(0.5) << "' y='" << height - 6 << "' font-size='12' text-anchor='middle'>"
            << xlabel << "</text>\n"
            << "<text x='12' y='" << y(0.5) << "' font-size='12' text-anchor='middle' transform='rotate(-90 12 "
            << y(0.5) << ")'>" << ylabel << "</text>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
        if (pts.empty()) return;
        out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (const auto& [px, py] : pts) out << x(px) << ',' << y(py) << ' ';
        out << "'/>\n";
    }

    void finish() { out << "</svg>\n"; }
};

} // namespace

void write_pr_svg(const std::filesystem::path& path, const std::vector<PRPoint>& points) {
    SvgCanvas canvas(path, 420, 320, 40);
    canvas.axes("recall", "precision");
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : points) pts.emplace_back(p.recall, p.precision);
    std::sort(pts.begin(), pts.end());
    canvas.polyline(pts, "steelblue");
    canvas.finish();
}

void write_timing_svg(const std::filesystem::path& path, const std::vector<IterationReport>& reports,
                      double t_time) {
    SvgCanvas canvas(path, 520, 320, 40);
    canvas.axes("iteration", "elapsed (s)");
    if (reports.empty()) {
        canvas.finish();
        return;
    }
    double top = std::isfinite(t_time) ? t_time : 0.0;
    for (const auto& r : reports) top = std::max(top, r.elapsed);
    if (top <= 0.0) top = 1.0;
    top *= 1.1;

    std::vector<std::pair<double, double>> pts;
    const double n = static_cast<double>(reports.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
        pts.emplace_back(static_cast<double>(i) / std::max(1.0, n - 1), reports[i].elapsed / top);
    }
    canvas.polyline(pts, "steelblue");
    if (std::isfinite(t_time)) {
        canvas.polyline({{0.0, t_time / top}, {1.0, t_time / top}}, "red");
    }
    canvas.finish();
}

} // namespace loopgraph
