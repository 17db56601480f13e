#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "crdnet/io.hpp"

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts need byte swaps");

namespace crdnet {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = {}) {
    std::ifstream in(path, mode);
    if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
    return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = {}) {
    std::ofstream out(path, mode);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

void read_exact(std::istream& in, void* dst, std::size_t bytes, const std::string& what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes)
        throw std::runtime_error("truncated file while reading " + what);
}

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    std::uint32_t v = 0;
    read_exact(in, &v, sizeof(v), what);
    return v;
}

}  // namespace

PointAnnotation load_annotation(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed annotation " + path.string() + ": " + e.what());
    }
    PointAnnotation ann;
    try {
        ann.width = j.at("width").get<int>();
        ann.height = j.at("height").get<int>();
        for (const auto& p : j.at("points")) {
            if (!p.is_array() || p.size() != 2)
                throw std::runtime_error("points entries must be [x, y] pairs");
            ann.points.push_back({p[0].get<double>(), p[1].get<double>()});
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed annotation " + path.string() + ": " + e.what());
    }
    if (ann.width < 1 || ann.height < 1)
        throw std::runtime_error("annotation " + path.string() + " has non-positive dimensions");
    for (const Point& p : ann.points)
        if (p.x < 0 || p.x >= ann.width || p.y < 0 || p.y >= ann.height)
            throw std::runtime_error("annotation " + path.string() + " has point (" +
                                     std::to_string(p.x) + ", " + std::to_string(p.y) +
                                     ") outside [0," + std::to_string(ann.width) + ")x[0," +
                                     std::to_string(ann.height) + ")");
    return ann;
}

void save_annotation(const std::filesystem::path& path, const PointAnnotation& ann) {
    json j;
    j["width"] = ann.width;
    j["height"] = ann.height;
    j["points"] = json::array();
    for (const Point& p : ann.points) j["points"].push_back({p.x, p.y});
    std::ofstream out = open_out(path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

DensityMap read_density(const std::filesystem::path& path) {
    std::ifstream in = open_in(path, std::ios::binary);
    char magic[4] = {};
    read_exact(in, magic, 4, "density magic in " + path.string());
    if (std::memcmp(magic, "CRD1", 4) != 0)
        throw std::runtime_error(path.string() + " is not a CRD1 density file");
    const std::uint32_t h = read_u32(in, "density height in " + path.string());
    const std::uint32_t w = read_u32(in, "density width in " + path.string());
    if (h == 0 || w == 0 || static_cast<std::uint64_t>(h) * w > (1u << 28))
        throw std::runtime_error(path.string() + " has implausible dimensions " + std::to_string(h) +
                                 "x" + std::to_string(w));
    DensityMap map(static_cast<int>(h), static_cast<int>(w));
    std::vector<float> buf(map.values.size());
    read_exact(in, buf.data(), buf.size() * sizeof(float), "density values in " + path.string());
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0)
        throw std::runtime_error(path.string() + " has trailing bytes after the value grid");
    for (std::size_t i = 0; i < buf.size(); ++i) map.values[i] = static_cast<Scalar>(buf[i]);
    return map;
}

void write_density(const std::filesystem::path& path, const DensityMap& map) {
    std::ofstream out = open_out(path, std::ios::binary);
    out.write("CRD1", 4);
    write_u32(out, static_cast<std::uint32_t>(map.height));
    write_u32(out, static_cast<std::uint32_t>(map.width));
    std::vector<float> buf(map.values.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(map.values[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& params) {
    std::ofstream out = open_out(path, std::ios::binary);
    out.write("CRDC", 4);
    write_u32(out, 1);  // format version
    write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const NamedTensor& p : params) {
        write_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const Shape s = p.tensor.shape();
        write_u32(out, static_cast<std::uint32_t>(s.n));
        write_u32(out, static_cast<std::uint32_t>(s.c));
        write_u32(out, static_cast<std::uint32_t>(s.h));
        write_u32(out, static_cast<std::uint32_t>(s.w));
        out.write(reinterpret_cast<const char*>(p.tensor.data()),
                  static_cast<std::streamsize>(p.tensor.numel() * sizeof(Scalar)));
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in = open_in(path, std::ios::binary);
    char magic[4] = {};
    read_exact(in, magic, 4, "checkpoint magic in " + path.string());
    if (std::memcmp(magic, "CRDC", 4) != 0)
        throw std::runtime_error(path.string() + " is not a CRDC checkpoint");
    const std::uint32_t version = read_u32(in, "checkpoint version");
    if (version != 1)
        throw std::runtime_error(path.string() + " has unsupported checkpoint version " +
                                 std::to_string(version));
    const std::uint32_t count = read_u32(in, "checkpoint parameter count");
    std::vector<NamedTensor> params;
    params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32(in, "parameter name length");
        if (name_len > 4096) throw std::runtime_error(path.string() + " has an implausible name length");
        std::string name(name_len, '\0');
        read_exact(in, name.data(), name_len, "parameter name");
        Shape s;
        s.n = static_cast<int>(read_u32(in, "shape"));
        s.c = static_cast<int>(read_u32(in, "shape"));
        s.h = static_cast<int>(read_u32(in, "shape"));
        s.w = static_cast<int>(read_u32(in, "shape"));
        Tensor t(s);
        read_exact(in, t.data(), t.numel() * sizeof(Scalar), "values of " + name);
        params.push_back({std::move(name), std::move(t)});
    }
    return params;
}

}  // namespace crdnet
