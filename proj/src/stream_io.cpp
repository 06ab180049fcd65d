#include "loopgraph/stream_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "loopgraph/errors.hpp"

namespace loopgraph {

namespace {

// The format is little-endian; this code assumes a little-endian host, which
// holds for every platform we build on.
void write_u32(std::FILE* f, uint32_t v) {
    if (std::fwrite(&v, sizeof v, 1, f) != 1) {
        throw IoError("short write while writing descriptor stream");
    }
}

[[noreturn]] void fail_at(const std::filesystem::path& path, long offset, const std::string& what) {
    std::ostringstream os;
    os << path.string() << ": " << what << " at byte offset " << offset;
    throw IoError(os.str());
}

uint32_t read_u32(std::FILE* f, const std::filesystem::path& path, const char* what) {
    const long off = std::ftell(f);
    uint32_t v = 0;
    if (std::fread(&v, sizeof v, 1, f) != 1) {
        fail_at(path, off, std::string("truncated file, expected ") + what);
    }
    return v;
}

} // namespace

StreamReader::StreamReader(const std::filesystem::path& path) : path_(path) {
    file_ = std::fopen(path.string().c_str(), "rb");
    if (!file_) {
        throw IoError("cannot open descriptor stream: " + path.string());
    }
    char magic[4];
    if (std::fread(magic, 1, 4, file_) != 4 || std::memcmp(magic, kStreamMagic, 4) != 0) {
        std::fclose(file_);
        file_ = nullptr;
        fail_at(path, 0, "bad magic, not a descriptor stream");
    }
    try {
        const uint32_t version = read_u32(file_, path_, "version");
        if (version != kStreamVersion) {
            fail_at(path, 4, "unsupported version " + std::to_string(version));
        }
        dim_ = static_cast<int>(read_u32(file_, path_, "dimension"));
        image_count_ = read_u32(file_, path_, "image count");
    } catch (...) {
        std::fclose(file_);
        file_ = nullptr;
        throw;
    }
    if (dim_ <= 0) {
        std::fclose(file_);
        file_ = nullptr;
        fail_at(path, 8, "dimension must be positive");
    }
}

StreamReader::~StreamReader() {
    if (file_) std::fclose(file_);
}

std::optional<DescriptorSet> StreamReader::next() {
    if (next_image_ >= image_count_) return std::nullopt;

    DescriptorSet set;
    set.image_id = static_cast<int>(next_image_);
    set.acquisition_stamp = static_cast<double>(next_image_);

    const uint32_t count = read_u32(file_, path_, "descriptor count");
    set.descriptors.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        const long off = std::ftell(file_);
        Descriptor& d = set.descriptors[i];
        d.resize(static_cast<std::size_t>(dim_));
        if (std::fread(d.data(), sizeof(float), d.size(), file_) != d.size()) {
            fail_at(path_, off, "truncated descriptor data");
        }
        for (std::size_t k = 0; k < d.size(); ++k) {
            if (!std::isfinite(d[k])) {
                fail_at(path_, off + static_cast<long>(k * sizeof(float)), "non-finite descriptor value");
            }
        }
    }
    ++next_image_;
    return set;
}

std::vector<DescriptorSet> load_stream(const std::filesystem::path& path) {
    StreamReader reader(path);
    std::vector<DescriptorSet> out;
    out.reserve(reader.image_count());
    while (auto set = reader.next()) {
        out.push_back(std::move(*set));
    }
    return out;
}

void write_stream(const std::filesystem::path& path,
                  const std::vector<DescriptorSet>& sets,
                  int dim_hint) {
    int dim = dim_hint;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (const Descriptor& d : sets[i].descriptors) {
            if (dim < 0) {
                dim = static_cast<int>(d.size());
            } else if (static_cast<int>(d.size()) != dim) {
                throw IoError("descriptor dimension mismatch in image " + std::to_string(i) +
                              ": expected " + std::to_string(dim) + ", got " + std::to_string(d.size()));
            }
            for (float v : d) {
                if (!std::isfinite(v)) {
                    throw IoError("non-finite descriptor value in image " + std::to_string(i));
                }
            }
        }
    }
    if (dim < 0) dim = 1; // all-empty stream; any positive dim is valid

    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) {
        throw IoError("cannot create descriptor stream: " + path.string());
    }
    try {
        if (std::fwrite(kStreamMagic, 1, 4, f) != 4) {
            throw IoError("short write while writing descriptor stream");
        }
        write_u32(f, kStreamVersion);
        write_u32(f, static_cast<uint32_t>(dim));
        write_u32(f, static_cast<uint32_t>(sets.size()));
        for (const DescriptorSet& set : sets) {
            write_u32(f, static_cast<uint32_t>(set.descriptors.size()));
            for (const Descriptor& d : set.descriptors) {
                if (std::fwrite(d.data(), sizeof(float), d.size(), f) != d.size()) {
                    throw IoError("short write while writing descriptor stream");
                }
            }
        }
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open ground truth: " + path.string());
    }
    GroundTruth gt;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream is(line);
        long a = 0, b = 0;
        if (!(is >> a)) continue; // blank or comment-only line
        if (!(is >> b)) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected two image ids");
        }
        gt.add(static_cast<int>(a), static_cast<int>(b));
    }
    return gt;
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot create ground truth: " + path.string());
    }
    out << "# query match\n";
    for (const auto& [lo, hi] : gt.pairs()) {
        out << hi << ' ' << lo << '\n';
    }
    if (!out) {
        throw IoError("write failure: " + path.string());
    }
}

} // namespace loopgraph
