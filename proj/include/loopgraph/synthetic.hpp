#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "loopgraph/types.hpp"

namespace loopgraph {

/// Desk-scale world generator: a set of latent places, each a bag of latent
/// descriptors, observed through a revisit script with per-frame noise,
/// dropout and perceptual aliasing (descriptors swapped for draws from a
/// pool shared by the whole world).
struct SyntheticWorldConfig {
    int num_places = 10;
    int words_per_place = 30;
    int dim = 64;
    std::vector<int> revisit_script; // place index per frame
    double noise_sigma = 0.0;
    double dropout_rate = 0.0;  // [0,1)
    double aliasing_rate = 0.0; // [0,1)
    uint64_t seed = 0;

    /// Throws ConfigError on out-of-range fields or script references.
    void validate() const;

    static SyntheticWorldConfig from_file(const std::filesystem::path& path);
    void to_file(const std::filesystem::path& path) const;
};

struct SyntheticWorld {
    std::vector<DescriptorSet> frames;
    GroundTruth ground_truth;
};

/// Deterministic for a given config: equal configs yield byte-identical
/// streams and ground truth.
SyntheticWorld generate_synthetic(const SyntheticWorldConfig& config);

/// Script syntax: comma/space separated place indices; "a..b" expands to an
/// inclusive range; a trailing "xN" repeats the whole expanded list N times.
/// Example: "0..9 x 60" is 600 frames cycling through ten places.
std::vector<int> parse_revisit_script(const std::string& text);

} // namespace loopgraph
