#pragma once

// Raster files: a JSON header
//   {"nx", "ny", "n_steps", "dx", "dy", "dt", "dtype", "payload"}
// next to a payload file holding nx*ny*n_steps values in flat order.
// dtype "f64le" is raw little-endian IEEE-754 binary64; dtype "csv" holds one
// grid row per line (frames stacked) written with 17 significant digits, so
// both encodings round-trip bit-exactly. Masks use the same format with 0/1.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spdegp/errors.hpp"
#include "spdegp/grid.hpp"

namespace spdegp {

enum class RasterEncoding { f64le, csv };

inline constexpr std::size_t kMaxCsvValues = 10000;

namespace detail {

inline std::uint64_t byteswap64(std::uint64_t x) {
    x = ((x & 0x00000000FFFFFFFFull) << 32) | ((x & 0xFFFFFFFF00000000ull) >> 32);
    x = ((x & 0x0000FFFF0000FFFFull) << 16) | ((x & 0xFFFF0000FFFF0000ull) >> 16);
    x = ((x & 0x00FF00FF00FF00FFull) << 8) | ((x & 0xFF00FF00FF00FF00ull) >> 8);
    return x;
}

inline std::filesystem::path payload_path(const std::filesystem::path& header, RasterEncoding enc) {
    auto p = header;
    p.replace_extension(enc == RasterEncoding::csv ? ".csv" : ".bin");
    return p;
}

} // namespace detail

inline void write_raster(const SpaceTimeField& field, const std::filesystem::path& path,
                         RasterEncoding enc = RasterEncoding::f64le) {
    const auto& g = field.grid;
    if (field.values.size() != g.size()) throw DimensionError("write_raster: size mismatch");
    if (enc == RasterEncoding::csv && field.values.size() > kMaxCsvValues)
        throw ConfigError("write_raster: CSV encoding is limited to " + std::to_string(kMaxCsvValues) + " values");

    const auto payload = detail::payload_path(path, enc);
    if (payload == path) throw IoError("write_raster: header path must not use the payload extension");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

    nlohmann::json header = {{"nx", g.nx},       {"ny", g.ny}, {"n_steps", g.n_steps},
                             {"dx", g.dx},       {"dy", g.dy}, {"dt", g.dt},
                             {"dtype", enc == RasterEncoding::csv ? "csv" : "f64le"},
                             {"payload", payload.filename().string()}};
    {
        std::ofstream hs(path);
        if (!hs) throw IoError("cannot write " + path.string());
        hs << header.dump(2) << '\n';
    }

    if (enc == RasterEncoding::f64le) {
        std::ofstream ps(payload, std::ios::binary);
        if (!ps) throw IoError("cannot write " + payload.string());
        std::vector<std::uint64_t> raw(field.values.size());
        for (std::size_t k = 0; k < raw.size(); ++k) {
            raw[k] = std::bit_cast<std::uint64_t>(field.values[k]);
            if constexpr (std::endian::native == std::endian::big) raw[k] = detail::byteswap64(raw[k]);
        }
        ps.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
        if (!ps) throw IoError("short write to " + payload.string());
    } else {
        std::ofstream ps(payload);
        if (!ps) throw IoError("cannot write " + payload.string());
        char buf[40];
        const auto nx = static_cast<std::size_t>(g.nx);
        for (std::size_t k = 0; k < field.values.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", field.values[k]);
            ps << buf << ((k + 1) % nx == 0 ? '\n' : ',');
        }
    }
}

inline void write_raster(const Field& field, const std::filesystem::path& path,
                         RasterEncoding enc = RasterEncoding::f64le) {
    write_raster(SpaceTimeField(field.grid.with_steps(1), field.values), path, enc);
}

inline SpaceTimeField read_raster(const std::filesystem::path& path) {
    std::ifstream hs(path);
    if (!hs) throw IoError("cannot open raster header " + path.string());
    nlohmann::json header;
    try {
        hs >> header;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed raster header " + path.string() + ": " + e.what());
    }

    Grid2D g;
    std::string dtype;
    std::string payload_name;
    try {
        g.nx = header.at("nx").get<int>();
        g.ny = header.at("ny").get<int>();
        g.n_steps = header.value("n_steps", 1);
        g.dx = header.value("dx", 1.0);
        g.dy = header.value("dy", 1.0);
        g.dt = header.value("dt", 1.0);
        dtype = header.value("dtype", std::string("f64le"));
        payload_name = header.at("payload").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed raster header " + path.string() + ": " + e.what());
    }
    try {
        g.validate();
    } catch (const ConfigError& e) {
        throw IoError("malformed raster header " + path.string() + ": " + e.what());
    }
    const auto payload = path.parent_path() / payload_name;
    const std::size_t expected = g.size();
    std::vector<double> values;

    if (dtype == "f64le") {
        std::ifstream ps(payload, std::ios::binary | std::ios::ate);
        if (!ps) throw IoError("cannot open raster payload " + payload.string());
        const auto bytes = static_cast<std::size_t>(ps.tellg());
        if (bytes != expected * 8)
            throw IoError("raster size mismatch: header says " + std::to_string(expected) + " values, payload " +
                          payload.string() + " holds " + std::to_string(bytes / 8.0));
        ps.seekg(0);
        std::vector<std::uint64_t> raw(expected);
        ps.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
        values.resize(expected);
        for (std::size_t k = 0; k < expected; ++k) {
            auto r = raw[k];
            if constexpr (std::endian::native == std::endian::big) r = detail::byteswap64(r);
            values[k] = std::bit_cast<double>(r);
        }
    } else if (dtype == "csv") {
        std::ifstream ps(payload);
        if (!ps) throw IoError("cannot open raster payload " + payload.string());
        std::string line;
        while (std::getline(ps, line)) {
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                if (cell.find_first_not_of(" \t\r") == std::string::npos) continue;
                char* end = nullptr;
                const double v = std::strtod(cell.c_str(), &end);
                if (end == cell.c_str()) throw IoError("raster payload " + payload.string() + ": bad number '" + cell + "'");
                values.push_back(v);
            }
        }
        if (values.size() != expected)
            throw IoError("raster size mismatch: header says " + std::to_string(expected) + " values, payload " +
                          payload.string() + " holds " + std::to_string(values.size()));
    } else {
        throw IoError("malformed raster header " + path.string() + ": unknown dtype '" + dtype + "'");
    }

    std::size_t bad = 0;
    for (double v : values) bad += std::isfinite(v) ? 0 : 1;
    if (bad > 0) warn(path.string() + ": " + std::to_string(bad) + " non-finite values");
    return SpaceTimeField(g, std::move(values));
}

inline Field read_raster_frame(const std::filesystem::path& path, int t = 0) {
    return read_raster(path).frame_field(t);
}

inline void write_masks(const std::vector<Mask>& masks, const Grid2D& grid, const std::filesystem::path& path,
                        RasterEncoding enc = RasterEncoding::f64le) {
    SpaceTimeField f(grid.with_steps(static_cast<int>(masks.size())));
    for (std::size_t t = 0; t < masks.size(); ++t)
        for (std::size_t k = 0; k < grid.nodes(); ++k) f.values[t * grid.nodes() + k] = masks[t][k] ? 1.0 : 0.0;
    write_raster(f, path, enc);
}

inline std::vector<Mask> read_masks(const std::filesystem::path& path) {
    const auto f = read_raster(path);
    std::vector<Mask> masks(static_cast<std::size_t>(f.grid.n_steps), Mask(f.grid.nodes(), 0));
    for (std::size_t t = 0; t < masks.size(); ++t)
        for (std::size_t k = 0; k < f.grid.nodes(); ++k) masks[t][k] = f.values[t * f.grid.nodes() + k] != 0.0;
    return masks;
}

} // namespace spdegp
