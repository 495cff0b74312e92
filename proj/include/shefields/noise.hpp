#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace shefields {

/// Space-time mesh on the periodic domain [0, length) x [0, nt*dt].
struct GridSpec {
    std::size_t nx = 0;
    double length = 0.0;
    double dt = 0.0;
    std::size_t nt = 0;

    double dx() const noexcept { return length / static_cast<double>(nx); }
    double t_end() const noexcept { return static_cast<double>(nt) * dt; }
    double x(std::size_t i) const noexcept { return static_cast<double>(i) * dx(); }

    /// Throws ConfigError unless dimensions are positive and dt <= dx^2.
    void validate() const;

    /// Validated spec.
    static GridSpec make(std::size_t nx, double length, double dt, std::size_t nt);

    /// Spec from a target resolution: nx = round(length/dx), nt = round(t_end/dt).
    static GridSpec from_resolution(double dx, double length, double dt, double t_end);

    bool operator==(const GridSpec&) const = default;
};

/// Number of whole steps reaching t_end; throws ConfigError if t_end is not a
/// multiple of dt or exceeds the grid's time extent.
std::size_t steps_to(const GridSpec& spec, double t_end);

/// Shortest distance between columns i and j on the periodic index ring.
std::size_t periodic_distance(std::size_t i, std::size_t j, std::size_t nx) noexcept;

/// Discrete space-time white-noise increments, entry (j, i) ~ N(0, dt*dx).
///
/// Rows are produced on demand from a counter-based stream keyed by
/// (seed, row), so a grid never has to be held in memory in full. Grids are
/// immutable; resampling returns a new grid sharing the original's data.
class NoiseGrid {
public:
    const GridSpec& spec() const noexcept { return spec_; }
    std::uint64_t seed() const noexcept { return seed_; }

    /// Writes row j (time step j) into out, which must hold spec().nx values.
    void fill_row(std::size_t j, std::span<double> out) const;

    double at(std::size_t j, std::size_t i) const;

    /// All nt*nx increments, row-major.
    std::vector<double> materialize() const;

    /// Same increments, held in memory.
    NoiseGrid materialized() const;

    bool stored() const noexcept { return static_cast<bool>(stored_); }

    /// Grid with explicit increments (replay, tests). Size must be nt*nx.
    static NoiseGrid from_increments(const GridSpec& spec, std::uint64_t seed,
                                     std::vector<double> increments);

    static NoiseGrid zero(const GridSpec& spec);

private:
    friend NoiseGrid sample_noise_grid(const GridSpec& spec, std::uint64_t seed);
    friend NoiseGrid resample_outside_window(const NoiseGrid& noise, std::size_t center_index,
                                             std::size_t radius_cells, std::uint64_t seed2);

    struct Patch {
        std::size_t center;
        std::size_t radius;
        std::uint64_t seed;
    };

    GridSpec spec_;
    std::uint64_t seed_ = 0;
    std::shared_ptr<const std::vector<double>> stored_;
    std::vector<Patch> patches_;
};

NoiseGrid sample_noise_grid(const GridSpec& spec, std::uint64_t seed);

/// Keeps columns within radius_cells (periodic distance) of center_index and
/// redraws every other entry from seed2.
NoiseGrid resample_outside_window(const NoiseGrid& noise, std::size_t center_index,
                                  std::size_t radius_cells, std::uint64_t seed2);

/// Binary dump: nx, nt, dt, dx, seed as little-endian 64-bit fields, then the
/// row-major float64 payload.
void write_noise_dump(const NoiseGrid& noise, std::ostream& out);
NoiseGrid read_noise_dump(std::istream& in);

}  // namespace shefields
