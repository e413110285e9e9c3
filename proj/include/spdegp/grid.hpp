#pragma once

// Regular raster geometry, space-time containers and observation sets.
//
// Flat ordering is row-major: node (i, j) with row i in [0, ny) (the y
// direction) and column j in [0, nx) (the x direction) maps to k = i*nx + j.
// Neighbours in x are at k +- 1, neighbours in y at k +- nx. A space-time
// vector stacks frames: entry (t, k) lives at t*nx*ny + k.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spdegp/errors.hpp"

namespace spdegp {

struct Grid2D {
    int nx = 3;
    int ny = 3;
    double dx = 1.0;
    double dy = 1.0;
    double dt = 1.0;
    int n_steps = 1;

    std::size_t nodes() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    std::size_t size() const { return nodes() * static_cast<std::size_t>(n_steps); }

    void validate() const {
        std::string why;
        if (nx < 3 || ny < 3) why += " nx and ny must be >= 3;";
        if (n_steps < 1) why += " n_steps must be >= 1;";
        if (!(dx > 0.0) || !(dy > 0.0) || !(dt > 0.0)) why += " dx, dy, dt must be > 0;";
        if (!why.empty()) throw ConfigError("invalid grid:" + why);
    }

    Grid2D with_steps(int steps) const {
        Grid2D g = *this;
        g.n_steps = steps;
        return g;
    }

    friend bool operator==(const Grid2D&, const Grid2D&) = default;
};

inline std::size_t flatten(int i, int j, const Grid2D& grid) {
    if (i < 0 || i >= grid.ny || j < 0 || j >= grid.nx)
        throw DimensionError("flatten: index (" + std::to_string(i) + ", " + std::to_string(j) +
                             ") outside " + std::to_string(grid.ny) + "x" + std::to_string(grid.nx));
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(grid.nx) + static_cast<std::size_t>(j);
}

inline std::pair<int, int> unflatten(std::size_t k, const Grid2D& grid) {
    if (k >= grid.nodes())
        throw DimensionError("unflatten: flat index " + std::to_string(k) + " out of range");
    const auto nx = static_cast<std::size_t>(grid.nx);
    return {static_cast<int>(k / nx), static_cast<int>(k % nx)};
}

/// One spatial frame.
struct Field {
    Grid2D grid;
    std::vector<double> values;

    Field() = default;
    explicit Field(const Grid2D& g, double fill = 0.0) : grid(g), values(g.nodes(), fill) {}
    Field(const Grid2D& g, std::vector<double> v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.nodes()) throw DimensionError("Field: value count does not match grid");
    }

    double& at(int i, int j) { return values[flatten(i, j, grid)]; }
    double at(int i, int j) const { return values[flatten(i, j, grid)]; }
};

/// A sequence of grid.n_steps frames stored contiguously.
struct SpaceTimeField {
    Grid2D grid;
    std::vector<double> values;

    SpaceTimeField() = default;
    explicit SpaceTimeField(const Grid2D& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
    SpaceTimeField(const Grid2D& g, std::vector<double> v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.size())
            throw DimensionError("SpaceTimeField: value count does not match grid");
    }

    int n_steps() const { return grid.n_steps; }

    std::span<double> frame(int t) {
        return std::span<double>(values).subspan(static_cast<std::size_t>(t) * grid.nodes(), grid.nodes());
    }
    std::span<const double> frame(int t) const {
        return std::span<const double>(values).subspan(static_cast<std::size_t>(t) * grid.nodes(), grid.nodes());
    }
    Field frame_field(int t) const {
        auto f = frame(t);
        return Field(grid.with_steps(1), std::vector<double>(f.begin(), f.end()));
    }
    void set_frame(int t, std::span<const double> v) {
        if (v.size() != grid.nodes()) throw DimensionError("set_frame: size mismatch");
        std::copy(v.begin(), v.end(), frame(t).begin());
    }

    /// Frames [first, first + count) as a new field.
    SpaceTimeField window(int first, int count) const {
        if (first < 0 || count < 1 || first + count > grid.n_steps)
            throw DimensionError("window: range outside the time axis");
        SpaceTimeField w(grid.with_steps(count));
        const auto m = grid.nodes();
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(first * m),
                  values.begin() + static_cast<std::ptrdiff_t>((first + count) * m), w.values.begin());
        return w;
    }
};

struct Observation {
    std::size_t index = 0; // flat space-time index
    double value = 0.0;
    double variance = 0.0;
};

using Mask = std::vector<std::uint8_t>;

/// Sparse observation set: (flat space-time index, value, noise variance)
/// triples sorted by index. The diagonal R is given by the variances.
class ObsSet {
public:
    ObsSet() = default;
    ObsSet(std::size_t state_size, std::vector<Observation> obs) : n_(state_size), obs_(std::move(obs)) {
        std::sort(obs_.begin(), obs_.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
        for (std::size_t q = 0; q < obs_.size(); ++q) {
            if (obs_[q].index >= n_) throw DimensionError("ObsSet: observation index out of range");
            if (q > 0 && obs_[q].index == obs_[q - 1].index)
                throw DimensionError("ObsSet: duplicate observation index");
            if (!(obs_[q].variance >= 0.0)) throw ConfigError("ObsSet: noise variance must be >= 0");
        }
    }

    /// Observe `truth` wherever masks[t][k] != 0.
    static ObsSet from_masks(const SpaceTimeField& truth, const std::vector<Mask>& masks, double variance) {
        const auto m = truth.grid.nodes();
        if (masks.size() != static_cast<std::size_t>(truth.grid.n_steps))
            throw DimensionError("from_masks: one mask per time step required");
        std::vector<Observation> obs;
        for (std::size_t t = 0; t < masks.size(); ++t) {
            if (masks[t].size() != m) throw DimensionError("from_masks: mask size mismatch");
            for (std::size_t k = 0; k < m; ++k)
                if (masks[t][k]) obs.push_back({t * m + k, truth.values[t * m + k], variance});
        }
        return ObsSet(truth.grid.size(), std::move(obs));
    }

    std::vector<Mask> masks(const Grid2D& grid) const {
        std::vector<Mask> out(static_cast<std::size_t>(grid.n_steps), Mask(grid.nodes(), 0));
        for (const auto& o : obs_) out[o.index / grid.nodes()][o.index % grid.nodes()] = 1;
        return out;
    }

    std::size_t state_size() const { return n_; }
    std::size_t size() const { return obs_.size(); }
    bool empty() const { return obs_.empty(); }
    const std::vector<Observation>& items() const { return obs_; }
    auto begin() const { return obs_.begin(); }
    auto end() const { return obs_.end(); }

    /// Same locations and variances, new values.
    ObsSet with_values(std::span<const double> values) const {
        if (values.size() != obs_.size()) throw DimensionError("with_values: size mismatch");
        ObsSet out = *this;
        for (std::size_t q = 0; q < obs_.size(); ++q) out.obs_[q].value = values[q];
        return out;
    }

    /// Restriction to the frames [first, first + count), re-indexed.
    ObsSet window(const Grid2D& grid, int first, int count) const {
        const auto m = grid.nodes();
        const auto lo = static_cast<std::size_t>(first) * m;
        const auto hi = static_cast<std::size_t>(first + count) * m;
        std::vector<Observation> obs;
        for (const auto& o : obs_)
            if (o.index >= lo && o.index < hi) obs.push_back({o.index - lo, o.value, o.variance});
        return ObsSet(static_cast<std::size_t>(count) * m, std::move(obs));
    }

private:
    std::size_t n_ = 0;
    std::vector<Observation> obs_;
};

/// Satellite-like swaths: parallel stripes of `swath_width` nodes repeated
/// every `spacing` nodes, rotated by `angle_deg`, shifted by
/// `phase_per_step` nodes each step from a seed-dependent offset.
inline std::vector<Mask> make_track_mask(const Grid2D& grid, int n_steps, double swath_width, double spacing,
                                         double angle_deg, double phase_per_step, std::uint64_t seed) {
    grid.validate();
    if (!(swath_width > 0.0) || !(swath_width < spacing))
        throw ConfigError("make_track_mask: need 0 < swath_width < spacing");
    if (spacing >= std::min(grid.nx, grid.ny))
        throw ConfigError("make_track_mask: spacing must be smaller than min(nx, ny)");
    if (n_steps < 1) throw ConfigError("make_track_mask: n_steps must be >= 1");

    std::mt19937_64 rng(seed);
    const double offset = std::uniform_real_distribution<double>(0.0, spacing)(rng);
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(a);
    const double sa = std::sin(a);

    std::vector<Mask> masks(static_cast<std::size_t>(n_steps), Mask(grid.nodes(), 0));
    for (int t = 0; t < n_steps; ++t) {
        for (int i = 0; i < grid.ny; ++i) {
            for (int j = 0; j < grid.nx; ++j) {
                const double u = j * ca + i * sa + offset + t * phase_per_step;
                const double r = u - spacing * std::floor(u / spacing);
                masks[static_cast<std::size_t>(t)][flatten(i, j, grid)] = r < swath_width ? 1 : 0;
            }
        }
    }
    return masks;
}

inline double coverage_fraction(const Mask& mask) {
    if (mask.empty()) return 0.0;
    return static_cast<double>(std::count(mask.begin(), mask.end(), std::uint8_t{1})) /
           static_cast<double>(mask.size());
}

} // namespace spdegp
