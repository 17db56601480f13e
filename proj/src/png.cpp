#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <zlib.h>

#include "crdnet/io.hpp"

namespace crdnet {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(0, out.data() + crc_start, static_cast<uInt>(4 + data.size()));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_density_png(const std::filesystem::path& path, const DensityMap& map) {
    Scalar peak = 0;
    for (Scalar v : map.values) peak = std::max(peak, v);

    // One filter byte (0 = none) per scanline, then the 8-bit samples.
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(map.height) * (map.width + 1));
    for (int y = 0; y < map.height; ++y) {
        raw.push_back(0);
        for (int x = 0; x < map.width; ++x) {
            const Scalar v = peak > 0 ? map.at(y, x) / peak : 0;
            raw.push_back(static_cast<std::uint8_t>(std::clamp(v, Scalar(0), Scalar(1)) * 255.0 + 0.5));
        }
    }

    uLongf compressed_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(compressed_size);
    if (compress2(compressed.data(), &compressed_size, raw.data(), static_cast<uLong>(raw.size()),
                  Z_BEST_SPEED) != Z_OK)
        throw std::runtime_error("deflate failed for " + path.string());
    compressed.resize(compressed_size);

    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(map.width));
    put_be32(ihdr, static_cast<std::uint32_t>(map.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);

    std::vector<std::uint8_t> file = {137, 'P', 'N', 'G', 13, 10, 26, 10};
    append_chunk(file, "IHDR", ihdr);
    append_chunk(file, "IDAT", compressed);
    append_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace crdnet
