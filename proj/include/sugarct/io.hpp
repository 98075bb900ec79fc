#pragma once

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geometry.hpp"
#include "grid.hpp"
#include "sugar.hpp"

namespace sugarct {

using json = nlohmann::json;

inline constexpr std::uint32_t kFormatVersion = 1;

// ---------------------------------------------------------------------------
// JSON forms of configuration types

inline json geometry_to_json(const FanBeamGeometry& g)
{
    return json{{"source_to_detector_mm", g.source_to_detector_mm},
                {"source_to_isocenter_mm", g.source_to_isocenter_mm},
                {"n_detectors", g.n_detectors},
                {"detector_pitch_mm", g.detector_pitch_mm},
                {"detector_angular_offset_rad", g.detector_angular_offset_rad},
                {"view_angles_rad", g.view_angles_rad},
                {"image_n", g.image_n},
                {"pixel_size_mm", g.pixel_size_mm},
                {"view_stride", g.view_stride}};
}

inline FanBeamGeometry geometry_from_json(const json& j)
{
    try {
        FanBeamGeometry g;
        g.source_to_detector_mm = j.at("source_to_detector_mm").get<double>();
        g.source_to_isocenter_mm = j.at("source_to_isocenter_mm").get<double>();
        g.n_detectors = j.at("n_detectors").get<std::size_t>();
        g.detector_pitch_mm = j.at("detector_pitch_mm").get<double>();
        g.detector_angular_offset_rad = j.at("detector_angular_offset_rad").get<double>();
        g.view_angles_rad = j.at("view_angles_rad").get<std::vector<double>>();
        g.image_n = j.at("image_n").get<std::size_t>();
        g.pixel_size_mm = j.at("pixel_size_mm").get<double>();
        g.view_stride = j.value("view_stride", std::size_t{1});
        g.validate();
        return g;
    } catch (const json::exception& e) {
        throw FormatError(std::string("geometry: ") + e.what());
    }
}

inline json architecture_to_json(const SugarArchitecture& a)
{
    return json{{"n_blocks", a.n_blocks},
                {"dm", to_string(a.dm)},
                {"channels", a.network.channels},
                {"scales", a.network.scales},
                {"haar_levels", a.haar_levels},
                {"shared_network", a.shared_network},
                {"use_threshold", a.use_threshold},
                {"adjoint", to_string(a.adjoint)},
                {"fbp_filter", to_string(a.fbp_filter)}};
}

inline SugarArchitecture architecture_from_json(const json& j)
{
    SugarArchitecture a;
    a.n_blocks = j.at("n_blocks").get<std::size_t>();
    a.dm = parse_dm_kind(j.at("dm").get<std::string>());
    a.network.channels = j.at("channels").get<std::size_t>();
    a.network.scales = j.at("scales").get<std::size_t>();
    a.haar_levels = j.at("haar_levels").get<std::size_t>();
    a.shared_network = j.at("shared_network").get<bool>();
    a.use_threshold = j.at("use_threshold").get<bool>();
    a.adjoint = parse_adjoint_mode(j.at("adjoint").get<std::string>());
    a.fbp_filter = parse_filter_kind(j.at("fbp_filter").get<std::string>());
    return a;
}

// ---------------------------------------------------------------------------
// Binary helpers

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f64(std::vector<unsigned char>& out, double v)
{
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xffu));
}

inline double get_f64(const unsigned char* p)
{
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const void* data, std::size_t size)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw FormatError("write failed for " + path.string());
}

inline std::uint32_t crc32_of(const unsigned char* p, std::size_t n)
{
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = ::crc32(crc, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) { return p.string() + ".json"; }

struct GridFile {
    Grid grid;
    json meta;
};

inline void save_grid(const std::filesystem::path& path, const char (&magic)[5], const Grid& g, json meta)
{
    std::vector<unsigned char> buf;
    buf.reserve(16 + 8 * g.size());
    buf.insert(buf.end(), magic, magic + 4);
    put_u32(buf, kFormatVersion);
    put_u32(buf, static_cast<std::uint32_t>(g.rows));
    put_u32(buf, static_cast<std::uint32_t>(g.cols));
    for (double v : g.values) put_f64(buf, v);
    meta["format_version"] = kFormatVersion;
    meta["rows"] = g.rows;
    meta["cols"] = g.cols;
    meta["payload_crc32"] = crc32_of(buf.data() + 16, buf.size() - 16);
    write_file(path, buf.data(), buf.size());
    const std::string text = meta.dump(2) + "\n";
    write_file(sidecar_path(path), text.data(), text.size());
}

inline GridFile load_grid(const std::filesystem::path& path, const char (&magic)[5])
{
    const auto buf = read_file(path);
    const std::string name = path.string();
    if (buf.size() < 16) throw FormatError(name + ": truncated header");
    if (std::memcmp(buf.data(), magic, 4) != 0)
        throw FormatError(name + ": wrong magic (expected " + std::string(magic) + ")");
    const std::uint32_t version = get_u32(buf.data() + 4);
    if (version != kFormatVersion) throw FormatError(name + ": unsupported version " + std::to_string(version));
    const std::size_t rows = get_u32(buf.data() + 8), cols = get_u32(buf.data() + 12);
    if (buf.size() - 16 != rows * cols * 8)
        throw FormatError(name + ": header dimensions " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " do not match payload of " + std::to_string(buf.size() - 16) + " bytes");
    GridFile out;
    std::ifstream side(sidecar_path(path));
    if (!side) throw FormatError(name + ": missing sidecar " + sidecar_path(path).string());
    try {
        out.meta = json::parse(side);
    } catch (const json::exception& e) {
        throw FormatError(name + ": unreadable sidecar: " + e.what());
    }
    if (out.meta.value("rows", std::size_t{0}) != rows || out.meta.value("cols", std::size_t{0}) != cols)
        throw FormatError(name + ": sidecar dimensions differ from header");
    if (!out.meta.contains("payload_crc32") ||
        out.meta["payload_crc32"].get<std::uint32_t>() != crc32_of(buf.data() + 16, buf.size() - 16))
        throw FormatError(name + ": payload checksum mismatch");
    out.grid = Grid(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) out.grid.values[i] = get_f64(buf.data() + 16 + 8 * i);
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Images and sinograms: 16-byte header (magic, version, rows, cols), little-endian
// float64 payload, and a JSON sidecar "<file>.json" with dimensions and a CRC-32.

inline void save_image(const std::filesystem::path& path, const Image& x)
{
    detail::save_grid(path, "SGIM", x.data, json{{"kind", "image"}, {"pixel_size_mm", x.pixel_size_mm}});
}

inline Image load_image(const std::filesystem::path& path)
{
    auto f = detail::load_grid(path, "SGIM");
    if (f.grid.rows != f.grid.cols) throw FormatError(path.string() + ": image must be square");
    return Image(std::move(f.grid), f.meta.value("pixel_size_mm", 1.0));
}

inline void save_sinogram(const std::filesystem::path& path, const Sinogram& s,
                          const std::optional<FanBeamGeometry>& g = std::nullopt)
{
    json meta{{"kind", "sinogram"}};
    if (g) meta["geometry"] = geometry_to_json(*g);
    detail::save_grid(path, "SGSN", s.data, std::move(meta));
}

struct LoadedSinogram {
    Sinogram sinogram;
    std::optional<FanBeamGeometry> geometry;
};

inline LoadedSinogram load_sinogram_with_geometry(const std::filesystem::path& path)
{
    auto f = detail::load_grid(path, "SGSN");
    LoadedSinogram out{Sinogram(std::move(f.grid)), std::nullopt};
    if (f.meta.contains("geometry")) out.geometry = geometry_from_json(f.meta["geometry"]);
    return out;
}

inline Sinogram load_sinogram(const std::filesystem::path& path)
{
    return load_sinogram_with_geometry(path).sinogram;
}

// ---------------------------------------------------------------------------
// PNG export

/// 8-bit grayscale PNG; values are mapped linearly from [lo, hi] to [0, 255] and clipped.
inline void export_png(const std::filesystem::path& path, const Grid& g, double lo, double hi)
{
    detail::require(hi > lo, "export_png: window upper bound must exceed lower bound");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw FormatError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw FormatError("libpng failed writing " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(g.cols), static_cast<png_uint_32>(g.rows), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(g.cols);
    for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < g.cols; ++c) {
            const double t = std::clamp((g(r, c) - lo) / (hi - lo), 0.0, 1.0);
            row[c] = static_cast<png_byte>(std::lround(255.0 * t));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// ---------------------------------------------------------------------------
// Trained parameters: "SUGR", u32 version, u32 block count, u32 manifest length,
// JSON manifest (architecture and per-block array lengths), then one little-endian
// float64 array per block: a, b, eta, eps followed by the block's network weights.
// With a shared network the weights travel with block 0.

template <class Real>
void save_params(const std::filesystem::path& path, const SugarParams<Real>& p)
{
    p.validate();
    const auto& arch = p.arch;
    const std::size_t K = arch.n_blocks;
    json blocks = json::array();
    for (std::size_t k = 0; k < K; ++k) {
        const bool owns = arch.n_networks() > 0 && (!arch.shared_network || k == 0);
        blocks.push_back(json{{"scalars", SugarArchitecture::kScalarsPerBlock},
                              {"network", owns ? arch.network.param_count() : 0}});
    }
    const json manifest{{"architecture", architecture_to_json(arch)}, {"blocks", blocks}};
    const std::string text = manifest.dump();

    std::vector<unsigned char> buf{'S', 'U', 'G', 'R'};
    detail::put_u32(buf, kFormatVersion);
    detail::put_u32(buf, static_cast<std::uint32_t>(K));
    detail::put_u32(buf, static_cast<std::uint32_t>(text.size()));
    buf.insert(buf.end(), text.begin(), text.end());
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < SugarArchitecture::kScalarsPerBlock; ++j)
            detail::put_f64(buf, static_cast<double>(p.values[4 * k + j]));
        if (blocks[k]["network"].get<std::size_t>() > 0)
            for (Real v : p.network(k)) detail::put_f64(buf, static_cast<double>(v));
    }
    detail::write_file(path, buf.data(), buf.size());
}

inline SugarParams<double> load_params(const std::filesystem::path& path)
{
    const auto buf = detail::read_file(path);
    const std::string name = path.string();
    if (buf.size() < 16) throw FormatError(name + ": truncated header");
    if (std::memcmp(buf.data(), "SUGR", 4) != 0) throw FormatError(name + ": wrong magic (expected SUGR)");
    if (detail::get_u32(buf.data() + 4) != kFormatVersion) throw FormatError(name + ": unsupported version");
    const std::size_t K = detail::get_u32(buf.data() + 8);
    const std::size_t mlen = detail::get_u32(buf.data() + 12);
    if (buf.size() < 16 + mlen) throw FormatError(name + ": truncated manifest");
    SugarParams<double> p;
    json manifest;
    try {
        manifest = json::parse(buf.begin() + 16, buf.begin() + 16 + static_cast<std::ptrdiff_t>(mlen));
        p = SugarParams<double>(architecture_from_json(manifest.at("architecture")));
    } catch (const json::exception& e) {
        throw FormatError(name + ": bad manifest: " + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(name + ": bad manifest: " + e.what());
    }
    if (p.arch.n_blocks != K || manifest["blocks"].size() != K)
        throw FormatError(name + ": block count disagrees with manifest");
    std::size_t expected = 16 + mlen;
    for (const auto& b : manifest["blocks"])
        expected += 8 * (b.at("scalars").get<std::size_t>() + b.at("network").get<std::size_t>());
    if (buf.size() != expected) throw FormatError(name + ": payload length does not match manifest");

    const unsigned char* cur = buf.data() + 16 + mlen;
    for (std::size_t k = 0; k < K; ++k) {
        const auto& b = manifest["blocks"][k];
        if (b["scalars"].get<std::size_t>() != SugarArchitecture::kScalarsPerBlock)
            throw FormatError(name + ": unexpected scalar count");
        for (std::size_t j = 0; j < SugarArchitecture::kScalarsPerBlock; ++j, cur += 8)
            p.values[4 * k + j] = detail::get_f64(cur);
        const std::size_t nw = b["network"].get<std::size_t>();
        if (nw == 0) continue;
        if (nw != p.arch.network.param_count()) throw FormatError(name + ": network size disagrees with architecture");
        auto dst = p.network(k);
        for (std::size_t i = 0; i < nw; ++i, cur += 8) dst[i] = detail::get_f64(cur);
    }
    try {
        p.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(name + ": " + e.what());
    }
    return p;
}

} // namespace sugarct
