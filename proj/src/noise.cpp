#include "shefields/noise.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "shefields/error.hpp"
#include "shefields/random.hpp"

namespace shefields {

void GridSpec::validate() const {
    std::ostringstream msg;
    if (nx == 0) msg << "nx must be positive; ";
    if (nt == 0) msg << "nt must be positive; ";
    if (!(length > 0.0) || !std::isfinite(length)) msg << "length must be positive; ";
    if (!(dt > 0.0) || !std::isfinite(dt)) msg << "dt must be positive; ";
    if (nx > 0 && length > 0.0 && dt > 0.0) {
        const double h = dx();
        // explicit-scheme stability for diffusion coefficient 1/2
        if (dt > h * h * (1.0 + 1e-12)) {
            msg << "stability rule dt <= dx^2 violated (dt=" << dt << ", dx^2=" << h * h << "); ";
        }
    }
    const std::string err = msg.str();
    if (!err.empty()) throw ConfigError("invalid grid: " + err.substr(0, err.size() - 2));
}

GridSpec GridSpec::make(std::size_t nx, double length, double dt, std::size_t nt) {
    GridSpec spec{nx, length, dt, nt};
    spec.validate();
    return spec;
}

GridSpec GridSpec::from_resolution(double dx, double length, double dt, double t_end) {
    if (!(dx > 0.0) || !(length > 0.0) || !(dt > 0.0) || !(t_end > 0.0)) {
        throw ConfigError("invalid grid: dx, length, dt and t must be positive");
    }
    const auto nx = static_cast<std::size_t>(std::llround(length / dx));
    const auto nt = static_cast<std::size_t>(std::llround(t_end / dt));
    if (nx == 0 || nt == 0) throw ConfigError("invalid grid: resolution coarser than domain");
    return make(nx, static_cast<double>(nx) * dx, dt, nt);
}

std::size_t steps_to(const GridSpec& spec, double t_end) {
    if (!(t_end >= 0.0)) throw ConfigError("t_end must be nonnegative");
    const double ratio = t_end / spec.dt;
    const auto steps = static_cast<std::size_t>(std::llround(ratio));
    if (std::abs(ratio - static_cast<double>(steps)) > 1e-6 * std::max(1.0, ratio)) {
        throw ConfigError("t_end is not a whole number of time steps");
    }
    if (steps > spec.nt) throw ConfigError("t_end exceeds the noise grid's time extent");
    return steps;
}

std::size_t periodic_distance(std::size_t i, std::size_t j, std::size_t nx) noexcept {
    const std::size_t d = i > j ? i - j : j - i;
    const std::size_t m = d % nx;
    return std::min(m, nx - m);
}

namespace {

void draw_row(std::uint64_t seed, std::size_t j, double scale, std::span<double> out) {
    SplitMix64 rng(stream_key(seed, j));
    NormalZiggurat::instance().fill(rng, out, scale);
}

}  // namespace

void NoiseGrid::fill_row(std::size_t j, std::span<double> out) const {
    if (out.size() != spec_.nx) throw PreconditionError("noise row buffer has wrong size");
    if (j >= spec_.nt) throw PreconditionError("noise row index out of range");
    const double scale = std::sqrt(spec_.dt * spec_.dx());
    if (stored_) {
        std::copy_n(stored_->begin() + static_cast<std::ptrdiff_t>(j * spec_.nx), spec_.nx,
                    out.begin());
    } else {
        draw_row(seed_, j, scale, out);
    }
    if (patches_.empty()) return;
    thread_local std::vector<double> fresh;
    fresh.resize(spec_.nx);
    for (const Patch& p : patches_) {
        draw_row(p.seed, j, scale, fresh);
        for (std::size_t i = 0; i < spec_.nx; ++i) {
            if (periodic_distance(i, p.center, spec_.nx) > p.radius) out[i] = fresh[i];
        }
    }
}

double NoiseGrid::at(std::size_t j, std::size_t i) const {
    std::vector<double> row(spec_.nx);
    fill_row(j, row);
    return row.at(i);
}

std::vector<double> NoiseGrid::materialize() const {
    std::vector<double> all(spec_.nt * spec_.nx);
    for (std::size_t j = 0; j < spec_.nt; ++j) {
        fill_row(j, std::span<double>(all).subspan(j * spec_.nx, spec_.nx));
    }
    return all;
}

NoiseGrid NoiseGrid::materialized() const {
    if (stored_ && patches_.empty()) return *this;
    NoiseGrid out;
    out.spec_ = spec_;
    out.seed_ = seed_;
    out.stored_ = std::make_shared<const std::vector<double>>(materialize());
    return out;
}

NoiseGrid NoiseGrid::from_increments(const GridSpec& spec, std::uint64_t seed,
                                     std::vector<double> increments) {
    spec.validate();
    if (increments.size() != spec.nt * spec.nx) {
        throw PreconditionError("increment array size does not match nt*nx");
    }
    NoiseGrid out;
    out.spec_ = spec;
    out.seed_ = seed;
    out.stored_ = std::make_shared<const std::vector<double>>(std::move(increments));
    return out;
}

NoiseGrid NoiseGrid::zero(const GridSpec& spec) {
    return from_increments(spec, 0, std::vector<double>(spec.nt * spec.nx, 0.0));
}

NoiseGrid sample_noise_grid(const GridSpec& spec, std::uint64_t seed) {
    spec.validate();
    NoiseGrid out;
    out.spec_ = spec;
    out.seed_ = seed;
    return out;
}

NoiseGrid resample_outside_window(const NoiseGrid& noise, std::size_t center_index,
                                  std::size_t radius_cells, std::uint64_t seed2) {
    const std::size_t nx = noise.spec().nx;
    if (center_index >= nx) throw PreconditionError("window center outside the grid");
    NoiseGrid out = noise;
    if (2 * radius_cells + 1 >= nx) return out;  // window covers every column
    out.patches_.push_back({center_index, radius_cells, seed2});
    return out;
}

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xFF);
    out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw ConfigError("truncated noise dump");
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | bytes[b];
    return v;
}

}  // namespace

void write_noise_dump(const NoiseGrid& noise, std::ostream& out) {
    const GridSpec& s = noise.spec();
    put_u64(out, s.nx);
    put_u64(out, s.nt);
    put_u64(out, std::bit_cast<std::uint64_t>(s.dt));
    put_u64(out, std::bit_cast<std::uint64_t>(s.dx()));
    put_u64(out, noise.seed());
    std::vector<double> row(s.nx);
    for (std::size_t j = 0; j < s.nt; ++j) {
        noise.fill_row(j, row);
        for (double v : row) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
}

NoiseGrid read_noise_dump(std::istream& in) {
    const std::uint64_t nx = get_u64(in);
    const std::uint64_t nt = get_u64(in);
    const double dt = std::bit_cast<double>(get_u64(in));
    const double dx = std::bit_cast<double>(get_u64(in));
    const std::uint64_t seed = get_u64(in);
    if (nx == 0 || nt == 0 || nx > (1ull << 32) || nt > (1ull << 32)) {
        throw ConfigError("noise dump header has implausible dimensions");
    }
    GridSpec spec{static_cast<std::size_t>(nx), static_cast<double>(nx) * dx, dt,
                  static_cast<std::size_t>(nt)};
    std::vector<double> data(spec.nx * spec.nt);
    for (double& v : data) v = std::bit_cast<double>(get_u64(in));
    return NoiseGrid::from_increments(spec, seed, std::move(data));
}

}  // namespace shefields
