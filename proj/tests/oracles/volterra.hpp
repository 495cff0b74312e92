#pragma once

// Renewal equation for the PAM second moment,
//   f(t) = 1 + q^2 int_0^t f(s) / (2 sqrt(pi (t - s))) ds,
// by product integration: f piecewise linear on a uniform grid, the
// singular kernel integrated exactly against each hat function.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace oracle {

class RenewalSolution {
public:
    RenewalSolution(double q, double t_max, std::size_t steps) : h_(t_max / static_cast<double>(steps)), f_(steps + 1) {
        const double c = q * q / (2.0 * std::sqrt(std::numbers::pi)) * std::sqrt(h_);
        // weights for lag m = n - j: A multiplies f_j, B multiplies f_{j+1}
        std::vector<double> A(steps + 1), B(steps + 1);
        for (std::size_t m = 1; m <= steps; ++m) {
            const double dm = static_cast<double>(m);
            const double s1 = std::sqrt(dm), s0 = std::sqrt(dm - 1.0);
            const double i0 = 2.0 * (s1 - s0);
            const double i1 = dm * i0 - 2.0 / 3.0 * (dm * s1 - (dm - 1.0) * s0);
            A[m] = c * (i0 - i1);
            B[m] = c * i1;
        }
        f_[0] = 1.0;
        for (std::size_t n = 1; n <= steps; ++n) {
            double rhs = 1.0;
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t m = n - j;
                rhs += A[m] * f_[j];
                if (j + 1 < n) rhs += B[m] * f_[j + 1];
            }
            f_[n] = rhs / (1.0 - B[1]);
        }
    }

    // linear interpolation between nodes
    double operator()(double t) const {
        const double u = t / h_;
        const auto i = static_cast<std::size_t>(std::floor(u));
        if (i + 1 >= f_.size()) return f_.back();
        const double w = u - static_cast<double>(i);
        return (1.0 - w) * f_[i] + w * f_[i + 1];
    }

private:
    double h_;
    std::vector<double> f_;
};

// Closed form at q = 1, from the Laplace transform 1 / (p (1 - 1/(2 sqrt p))).
inline double renewal_closed_form_q1(double t) { return std::exp(t / 4.0) * (1.0 + std::erf(std::sqrt(t) / 2.0)); }

}  // namespace oracle
