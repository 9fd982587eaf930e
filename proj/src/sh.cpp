#include "refsplat/sh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "refsplat/error.hpp"

namespace refsplat {

namespace {

double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

double double_factorial(int n) {
    double r = 1.0;
    for (int i = n; i > 1; i -= 2) r *= i;
    return r;
}

void check_degree(int l) {
    if (l < 0 || l > kMaxShDegree)
        throw DomainError("SH degree l=" + std::to_string(l) + " outside [0, 5]");
}

struct NormTable {
    std::array<double, sh_coeff_count(kMaxShDegree)> k{};
    NormTable() {
        for (int l = 0; l <= kMaxShDegree; ++l)
            for (int m = -l; m <= l; ++m) {
                const int am = m < 0 ? -m : m;
                k[sh_index(l, m)] = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) *
                                              factorial(l - am) / factorial(l + am));
            }
    }
};

const NormTable& norms() {
    static const NormTable table;
    return table;
}

}  // namespace

Direction::Direction(double x, double y, double z) {
    Eigen::Vector3d v(x, y, z);
    if (!v.allFinite()) throw NumericError("direction has non-finite components");
    const double n = v.norm();
    if (n == 0.0) throw DomainError("zero-length direction");
    v_ = v / n;
}

double Direction::theta() const { return std::acos(std::clamp(v_.z(), -1.0, 1.0)); }
double Direction::phi() const { return std::atan2(v_.y(), v_.x()); }

ShCoeffs::ShCoeffs(int degree) : degree_max(degree) {
    check_degree(degree);
    coeffs.assign(3 * sh_coeff_count(degree), 0.0);
}

double legendre_assoc(int l, int m, double x) {
    check_degree(l);
    if (m < 0 || m > l)
        throw DomainError("Legendre order m=" + std::to_string(m) + " outside [0, l=" + std::to_string(l) + "]");
    if (!(std::abs(x) <= 1.0)) throw DomainError("Legendre argument |x| > 1");

    // Diagonal seed P_m^m, one-step lift P_{m+1}^m, then the l-recurrence.
    double pmm = ((m % 2) ? -1.0 : 1.0) * double_factorial(2 * m - 1) * std::pow(1.0 - x * x, 0.5 * m);
    if (l == m) return pmm;
    double pm1 = x * (2.0 * m + 1.0) * pmm;
    if (l == m + 1) return pm1;
    double pl = 0.0;
    for (int ll = m + 2; ll <= l; ++ll) {
        pl = (x * (2.0 * ll - 1.0) * pm1 - (ll + m - 1.0) * pmm) / (ll - m);
        pmm = pm1;
        pm1 = pl;
    }
    return pl;
}

double sh_normalization(int l, int m) {
    check_degree(l);
    if (std::abs(m) > l)
        throw DomainError("SH order |m|=" + std::to_string(std::abs(m)) + " exceeds l=" + std::to_string(l));
    return norms().k[sh_index(l, m)];
}

double sh_basis(int l, int m, const Direction& dir) {
    const double k = sh_normalization(l, m);
    const double x = std::cos(dir.theta());
    const double phi = dir.phi();
    if (m > 0) return std::numbers::sqrt2 * k * std::cos(m * phi) * legendre_assoc(l, m, x);
    if (m < 0) return std::numbers::sqrt2 * k * std::sin(-m * phi) * legendre_assoc(l, -m, x);
    return k * legendre_assoc(l, 0, x);
}

Rgb eval_sh_color(const ShCoeffs& coeffs, const Direction& dir, int active_degree) {
    if (active_degree < 0 || active_degree > coeffs.degree_max)
        throw DomainError("active SH degree " + std::to_string(active_degree) + " exceeds stored degree " +
                          std::to_string(coeffs.degree_max));
    std::array<double, sh_coeff_count(kMaxShDegree)> basis{};
    sh_basis_all(dir.vec(), active_degree, basis);
    const int stride = coeffs.per_channel();
    const int count = sh_coeff_count(active_degree);
    Rgb out{};
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = 0; k < count; ++k) acc += coeffs.coeffs[c * stride + k] * basis[k];
        out[c] = acc;
    }
    return out;
}

Rgb eval_sh_color_clamped(const ShCoeffs& coeffs, const Direction& dir, int active_degree) {
    Rgb c = eval_sh_color(coeffs, dir, active_degree);
    for (double& v : c) v = std::max(0.0, v + 0.5);
    return c;
}

void sh_basis_all(const Eigen::Vector3d& d, int degree, std::span<double> out, std::span<Eigen::Vector3d> grad) {
    check_degree(degree);
    const bool want_grad = !grad.empty();
    const double x = d.x(), y = d.y(), z = d.z();
    const auto& k = norms().k;

    // Re/Im of (x + iy)^m and their partial derivatives.
    std::array<double, kMaxShDegree + 1> cm{}, sm{};
    cm[0] = 1.0;
    sm[0] = 0.0;
    for (int m = 1; m <= degree; ++m) {
        cm[m] = x * cm[m - 1] - y * sm[m - 1];
        sm[m] = x * sm[m - 1] + y * cm[m - 1];
    }

    for (int m = 0; m <= degree; ++m) {
        // Q_l^m(z): P_l^m without the (1 - z^2)^{m/2} and (-1)^m factors.
        double q_prev2 = 0.0, dq_prev2 = 0.0;
        double q_prev = double_factorial(2 * m - 1), dq_prev = 0.0;
        const double sign = (m % 2) ? -1.0 : 1.0;
        for (int l = m; l <= degree; ++l) {
            double q = q_prev, dq = dq_prev;
            if (l == m + 1) {
                q = z * (2.0 * m + 1.0) * q_prev;
                dq = (2.0 * m + 1.0) * q_prev + z * (2.0 * m + 1.0) * dq_prev;
            } else if (l > m + 1) {
                q = (z * (2.0 * l - 1.0) * q_prev - (l + m - 1.0) * q_prev2) / (l - m);
                dq = ((2.0 * l - 1.0) * q_prev + z * (2.0 * l - 1.0) * dq_prev - (l + m - 1.0) * dq_prev2) / (l - m);
            }
            if (l > m) {
                q_prev2 = q_prev;
                dq_prev2 = dq_prev;
                q_prev = q;
                dq_prev = dq;
            }

            if (m == 0) {
                out[sh_index(l, 0)] = k[sh_index(l, 0)] * q;
                if (want_grad) grad[sh_index(l, 0)] = Eigen::Vector3d(0.0, 0.0, k[sh_index(l, 0)] * dq);
                continue;
            }
            const double a = std::numbers::sqrt2 * k[sh_index(l, m)] * sign;
            out[sh_index(l, m)] = a * q * cm[m];
            out[sh_index(l, -m)] = a * q * sm[m];
            if (want_grad) {
                const double dcx = m * cm[m - 1], dcy = -m * sm[m - 1];
                const double dsx = m * sm[m - 1], dsy = m * cm[m - 1];
                grad[sh_index(l, m)] = a * Eigen::Vector3d(q * dcx, q * dcy, dq * cm[m]);
                grad[sh_index(l, -m)] = a * Eigen::Vector3d(q * dsx, q * dsy, dq * sm[m]);
            }
        }
    }
}

}  // namespace refsplat
