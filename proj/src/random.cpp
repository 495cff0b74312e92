#include "shefields/random.hpp"

#include <bit>
#include <cmath>

namespace shefields {

namespace {

constexpr double kTailStart = 3.6541528853610088;
constexpr double kLayerArea = 0.00492867323399;
constexpr double kTwo52 = 4503599627370496.0;

}  // namespace

NormalZiggurat::NormalZiggurat() {
    double dn = kTailStart;
    double tn = dn;
    const double q = kLayerArea / std::exp(-0.5 * dn * dn);
    ki_[0] = static_cast<std::uint64_t>((dn / q) * kTwo52);
    ki_[1] = 0;
    wi_[0] = q / kTwo52;
    wi_[255] = dn / kTwo52;
    fi_[0] = 1.0;
    fi_[255] = std::exp(-0.5 * dn * dn);
    for (int i = 254; i >= 1; --i) {
        dn = std::sqrt(-2.0 * std::log(kLayerArea / dn + std::exp(-0.5 * dn * dn)));
        ki_[i + 1] = static_cast<std::uint64_t>((dn / tn) * kTwo52);
        tn = dn;
        fi_[i] = std::exp(-0.5 * dn * dn);
        wi_[i] = dn / kTwo52;
    }
}

const NormalZiggurat& NormalZiggurat::instance() {
    static const NormalZiggurat table;
    return table;
}

double NormalZiggurat::slow_path(SplitMix64& rng, std::uint64_t bits) const noexcept {
    for (;;) {
        const unsigned idx = static_cast<unsigned>(bits & 0xFF);
        const bool negative = (bits >> 8) & 1;
        const std::uint64_t rabs = bits >> 12;
        const double x = static_cast<double>(rabs) * wi_[idx];
        if (rabs < ki_[idx]) return negative ? -x : x;
        if (idx == 0) {
            // tail beyond kTailStart
            for (;;) {
                const double xx = -std::log1p(-rng.uniform()) / kTailStart;
                const double yy = -std::log1p(-rng.uniform());
                if (yy + yy > xx * xx) return negative ? -(kTailStart + xx) : kTailStart + xx;
            }
        }
        if (fi_[idx] + rng.uniform() * (fi_[idx - 1] - fi_[idx]) < std::exp(-0.5 * x * x)) {
            return negative ? -x : x;
        }
        bits = rng();
    }
}

namespace {

// bit 8 of the draw is the sign; flipping the sign bit avoids a 50/50 branch
inline double with_sign(double x, std::uint64_t bits) noexcept {
    return std::bit_cast<double>(std::bit_cast<std::uint64_t>(x) ^ ((bits & 0x100u) << 55));
}

}  // namespace

double NormalZiggurat::operator()(SplitMix64& rng) const noexcept {
    const std::uint64_t bits = rng();
    const unsigned idx = static_cast<unsigned>(bits & 0xFF);
    const std::uint64_t rabs = bits >> 12;
    if (rabs < ki_[idx]) {
        return with_sign(static_cast<double>(rabs) * wi_[idx], bits);
    }
    return slow_path(rng, bits);
}

void NormalZiggurat::fill(SplitMix64& rng, std::span<double> out, double scale) const noexcept {
    for (double& v : out) {
        const std::uint64_t bits = rng();
        const unsigned idx = static_cast<unsigned>(bits & 0xFF);
        const std::uint64_t rabs = bits >> 12;
        double x;
        if (rabs < ki_[idx]) [[likely]] {
            x = with_sign(static_cast<double>(rabs) * wi_[idx], bits);
        } else {
            x = slow_path(rng, bits);
        }
        v = scale * x;
    }
}

}  // namespace shefields
