#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "refsplat/image.hpp"

namespace refsplat {

inline constexpr int kMaxShDegree = 5;
/// Y_0^0, the constant basis value 1/(2 sqrt(pi)).
inline constexpr double kShC0 = 0.28209479177387814;

constexpr int sh_coeff_count(int degree) noexcept { return (degree + 1) * (degree + 1); }
/// Flat index of (l, m) in canonical order: l ascending, m from -l to +l.
constexpr int sh_index(int l, int m) noexcept { return l * l + l + m; }

/// Unit view direction. Construction normalizes and rejects the zero vector.
class Direction {
public:
    Direction(double x, double y, double z);
    explicit Direction(const Eigen::Vector3d& v) : Direction(v.x(), v.y(), v.z()) {}

    const Eigen::Vector3d& vec() const noexcept { return v_; }
    double theta() const;  ///< arccos(z)
    double phi() const;    ///< atan2(y, x)

private:
    Eigen::Vector3d v_;
};

/// Per-channel real SH coefficients, channel-major then canonical (l, m).
struct ShCoeffs {
    int degree_max = 0;
    std::vector<double> coeffs;  // 3 * (degree_max+1)^2

    ShCoeffs() = default;
    explicit ShCoeffs(int degree);
    int per_channel() const noexcept { return sh_coeff_count(degree_max); }
    double& at(int channel, int l, int m) { return coeffs[channel * per_channel() + sh_index(l, m)]; }
    double at(int channel, int l, int m) const { return coeffs[channel * per_channel() + sh_index(l, m)]; }
};

/// Associated Legendre P_l^m(x) with the Condon-Shortley phase, 0 <= m <= l <= 5.
double legendre_assoc(int l, int m, double x);

/// K_l^m = sqrt((2l+1)/(4 pi) * (l-|m|)! / (l+|m|)!).
double sh_normalization(int l, int m);

/// Real basis Y_l^m evaluated through (theta, phi).
double sh_basis(int l, int m, const Direction& dir);

/// Raw expansion sum_{l<=active} sum_m q_l^m Y_l^m(dir), per channel.
Rgb eval_sh_color(const ShCoeffs& coeffs, const Direction& dir, int active_degree);

/// Renderer-facing color: raw expansion + 0.5, clamped to >= 0.
Rgb eval_sh_color_clamped(const ShCoeffs& coeffs, const Direction& dir, int active_degree);

/// All basis values up to `degree` for a unit vector, written in canonical
/// order into out[0 .. (degree+1)^2). Evaluated as polynomials in (x, y, z),
/// which makes the optional gradient (d Y / d dir, dir treated as a free
/// 3-vector on the unit sphere) well defined at the poles.
void sh_basis_all(const Eigen::Vector3d& unit_dir, int degree, std::span<double> out,
                  std::span<Eigen::Vector3d> grad = {});

}  // namespace refsplat
