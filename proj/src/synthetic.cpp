#include "loopgraph/synthetic.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "loopgraph/errors.hpp"
#include "loopgraph/rng.hpp"

namespace loopgraph {

namespace {

// Rng stream ids; frames use kFrameStreamBase + t so each frame's draws are
// independent of how many descriptors earlier frames emitted.
constexpr uint64_t kPlaceStream = 0;
constexpr uint64_t kPoolStream = 1;
constexpr uint64_t kFrameStreamBase = 16;

std::vector<Descriptor> draw_latents(Rng& rng, int count, int dim) {
    std::vector<Descriptor> out(static_cast<std::size_t>(count));
    for (auto& d : out) {
        d.resize(static_cast<std::size_t>(dim));
        for (auto& v : d) v = static_cast<float>(rng.uniform01());
    }
    return out;
}

} // namespace

void SyntheticWorldConfig::validate() const {
    if (num_places < 1) throw ConfigError("num_places must be >= 1");
    if (dim < 2) throw ConfigError("dim must be >= 2");
    if (words_per_place < 1) throw ConfigError("words_per_place must be >= 1");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must be in [0,1)");
    if (aliasing_rate < 0.0 || aliasing_rate >= 1.0) throw ConfigError("aliasing_rate must be in [0,1)");
    for (std::size_t t = 0; t < revisit_script.size(); ++t) {
        if (revisit_script[t] < 0 || revisit_script[t] >= num_places) {
            throw ConfigError("revisit_script[" + std::to_string(t) + "]=" +
                              std::to_string(revisit_script[t]) + " references place >= num_places");
        }
    }
}

SyntheticWorld generate_synthetic(const SyntheticWorldConfig& config) {
    config.validate();

    Rng place_rng(config.seed, kPlaceStream);
    std::vector<std::vector<Descriptor>> places(static_cast<std::size_t>(config.num_places));
    for (auto& latents : places) {
        latents = draw_latents(place_rng, config.words_per_place, config.dim);
    }
    Rng pool_rng(config.seed, kPoolStream);
    const std::vector<Descriptor> shared_pool = draw_latents(pool_rng, config.words_per_place, config.dim);

    SyntheticWorld world;
    world.frames.reserve(config.revisit_script.size());

    for (std::size_t t = 0; t < config.revisit_script.size(); ++t) {
        const int place = config.revisit_script[t];
        Rng rng(config.seed, kFrameStreamBase + t);

        DescriptorSet set;
        set.image_id = static_cast<int>(t);
        set.acquisition_stamp = static_cast<double>(t);

        for (const Descriptor& latent : places[static_cast<std::size_t>(place)]) {
            if (rng.uniform01() < config.dropout_rate) continue;
            const bool aliased = rng.uniform01() < config.aliasing_rate;
            const Descriptor& base =
                aliased ? shared_pool[rng.uniform_u32(static_cast<uint32_t>(shared_pool.size()))]
                        : latent;
            Descriptor d(base.size());
            for (std::size_t k = 0; k < d.size(); ++k) {
                d[k] = base[k] + static_cast<float>(rng.normal(config.noise_sigma));
            }
            set.descriptors.push_back(std::move(d));
        }
        world.frames.push_back(std::move(set));

        for (std::size_t earlier = 0; earlier < t; ++earlier) {
            if (config.revisit_script[earlier] == place) {
                world.ground_truth.add(static_cast<int>(earlier), static_cast<int>(t));
            }
        }
    }
    return world;
}

std::vector<int> parse_revisit_script(const std::string& text) {
    // Tokens split on commas/whitespace; "a..b" is an inclusive range and a
    // trailing "xN" repeats the expanded list.
    std::string norm = text;
    for (char& c : norm) {
        if (c == ',') c = ' ';
    }
    std::istringstream is(norm);
    std::vector<int> script;
    long repeat = 1;
    std::string tok;
    while (is >> tok) {
        if (tok == "x" || tok[0] == 'x' || tok[0] == 'X') {
            std::string num = tok.size() > 1 ? tok.substr(1) : "";
            if (num.empty() && !(is >> num)) {
                throw ConfigError("revisit script: repeat marker 'x' without a count");
            }
            try {
                repeat = std::stol(num);
            } catch (const std::exception&) {
                throw ConfigError("revisit script: bad repeat count '" + num + "'");
            }
            if (repeat < 1) throw ConfigError("revisit script: repeat count must be >= 1");
            std::string extra;
            if (is >> extra) {
                throw ConfigError("revisit script: repeat marker must come last");
            }
            break;
        }
        const auto dots = tok.find("..");
        try {
            if (dots != std::string::npos) {
                const long a = std::stol(tok.substr(0, dots));
                const long b = std::stol(tok.substr(dots + 2));
                if (a <= b) {
                    for (long v = a; v <= b; ++v) script.push_back(static_cast<int>(v));
                } else {
                    for (long v = a; v >= b; --v) script.push_back(static_cast<int>(v));
                }
            } else {
                script.push_back(static_cast<int>(std::stol(tok)));
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("revisit script: bad token '" + tok + "'");
        }
    }
    if (repeat > 1) {
        const std::vector<int> base = script;
        script.reserve(base.size() * static_cast<std::size_t>(repeat));
        for (long r = 1; r < repeat; ++r) {
            script.insert(script.end(), base.begin(), base.end());
        }
    }
    return script;
}

SyntheticWorldConfig SyntheticWorldConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open synthetic config: " + path.string());
    }
    SyntheticWorldConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            bool blank = true;
            for (char c : line) {
                if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
            }
            if (blank) continue;
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "num_places") cfg.num_places = std::stoi(value);
            else if (key == "words_per_place") cfg.words_per_place = std::stoi(value);
            else if (key == "dim") cfg.dim = std::stoi(value);
            else if (key == "noise_sigma") cfg.noise_sigma = std::stod(value);
            else if (key == "dropout_rate") cfg.dropout_rate = std::stod(value);
            else if (key == "aliasing_rate") cfg.aliasing_rate = std::stod(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "revisit_script") cfg.revisit_script = parse_revisit_script(value);
            else throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": bad value for '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

void SyntheticWorldConfig::to_file(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot create synthetic config: " + path.string());
    }
    out << "num_places = " << num_places << '\n'
        << "words_per_place = " << words_per_place << '\n'
        << "dim = " << dim << '\n'
        << "noise_sigma = " << noise_sigma << '\n'
        << "dropout_rate = " << dropout_rate << '\n'
        << "aliasing_rate = " << aliasing_rate << '\n'
        << "seed = " << seed << '\n'
        << "revisit_script =";
    for (int p : revisit_script) out << ' ' << p;
    out << '\n';
}

} // namespace loopgraph
