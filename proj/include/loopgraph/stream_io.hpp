#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "loopgraph/types.hpp"

namespace loopgraph {

/// Binary descriptor stream format (little-endian):
///   magic "LGDS", u32 version=1, u32 dim, u32 image_count,
///   then per image: u32 descriptor_count, descriptor_count*dim float32.
inline constexpr char kStreamMagic[4] = {'L', 'G', 'D', 'S'};
inline constexpr uint32_t kStreamVersion = 1;

/// Pull-based reader over a descriptor stream file. Validates the header on
/// construction; next() yields sets in stored order with image_id 0..N-1.
/// Malformed content raises IoError naming the byte offset.
class StreamReader {
public:
    explicit StreamReader(const std::filesystem::path& path);
    ~StreamReader();

    StreamReader(const StreamReader&) = delete;
    StreamReader& operator=(const StreamReader&) = delete;

    std::optional<DescriptorSet> next();

    int dim() const { return dim_; }
    uint32_t image_count() const { return image_count_; }

private:
    std::FILE* file_ = nullptr;
    std::filesystem::path path_;
    int dim_ = 0;
    uint32_t image_count_ = 0;
    uint32_t next_image_ = 0;
};

std::vector<DescriptorSet> load_stream(const std::filesystem::path& path);

/// Writes the stream format above. All non-empty sets must share one
/// dimension; a mismatch raises IoError before any partial image is written.
void write_stream(const std::filesystem::path& path,
                  const std::vector<DescriptorSet>& sets,
                  int dim_hint = -1);

/// Ground-truth file: text, one "i j" pair per line, '#' starts a comment.
GroundTruth load_ground_truth(const std::filesystem::path& path);
void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt);

} // namespace loopgraph
