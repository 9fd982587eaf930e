#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "refsplat/image.hpp"
#include "refsplat/sh.hpp"

namespace refsplat {

/// Trainable parameter groups, in checkpoint order.
enum class ParamGroup { position, rotation, log_scale, raw_alpha_trans, raw_alpha_ref, raw_beta_ref, sh_trans, sh_ref };

inline constexpr std::array<ParamGroup, 8> kAllParamGroups = {
    ParamGroup::position,        ParamGroup::rotation,      ParamGroup::log_scale, ParamGroup::raw_alpha_trans,
    ParamGroup::raw_alpha_ref,   ParamGroup::raw_beta_ref,  ParamGroup::sh_trans,  ParamGroup::sh_ref,
};

const char* param_group_name(ParamGroup g) noexcept;

/// Flat per-Gaussian arrays shared by the scene and its gradients.
///
/// Rotations are (w, x, y, z) quaternions. SH arrays hold, per Gaussian,
/// 3 channels x (sh_degree+1)^2 coefficients, channel-major.
struct GaussianArrays {
    int sh_degree = kMaxShDegree;
    std::vector<double> positions;
    std::vector<double> rotations;
    std::vector<double> log_scales;
    std::vector<double> raw_alpha_trans;
    std::vector<double> raw_alpha_ref;
    std::vector<double> raw_beta_ref;
    std::vector<double> sh_trans;
    std::vector<double> sh_ref;

    std::size_t size() const noexcept { return raw_alpha_trans.size(); }
    bool empty() const noexcept { return size() == 0; }
    int sh_per_channel() const noexcept { return sh_coeff_count(sh_degree); }
    int sh_stride() const noexcept { return 3 * sh_per_channel(); }
    /// Number of scalars per Gaussian in group g.
    int group_width(ParamGroup g) const noexcept;

    std::vector<double>& group(ParamGroup g);
    const std::vector<double>& group(ParamGroup g) const;

    /// Resizes every group to n Gaussians, zero-filling new entries.
    void resize(std::size_t n);
    /// Zero-filled arrays with the same shape as `other`.
    static GaussianArrays zeros_like(const GaussianArrays& other);

    bool operator==(const GaussianArrays&) const = default;
};

/// The trainable scene: dual-branch (transmitted / reflected) Gaussians.
struct GaussianSet : GaussianArrays {
    Eigen::Vector3d position(std::size_t i) const { return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]}; }
    Eigen::Vector4d rotation(std::size_t i) const {
        return {rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]};
    }
    Eigen::Vector3d scale(std::size_t i) const;
    double alpha_trans(std::size_t i) const;
    double alpha_ref(std::size_t i) const;
    double beta_ref(std::size_t i) const;
    std::span<const double> sh_trans_of(std::size_t i) const {
        return {sh_trans.data() + i * sh_stride(), static_cast<std::size_t>(sh_stride())};
    }
    std::span<const double> sh_ref_of(std::size_t i) const {
        return {sh_ref.data() + i * sh_stride(), static_cast<std::size_t>(sh_stride())};
    }

    /// Appends a copy of Gaussian `src` from `from` (which must share sh_degree).
    void append_copy(const GaussianSet& from, std::size_t src);
    /// Keeps only Gaussians whose keep[i] is true, preserving order.
    void filter(const std::vector<bool>& keep);
    /// Re-expresses the SH arrays at another degree (zero-padding or truncating).
    GaussianSet with_sh_degree(int degree) const;
    void normalize_rotations();
    bool all_finite() const;
};

using ParamGradients = GaussianArrays;

/// Pinhole camera with a world-to-camera rigid transform. Camera space is
/// x right, y down, z forward; pixel (x, y) samples image position (x, y).
struct Camera {
    int width = 0;
    int height = 0;
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  ///< world -> camera
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double near = 0.01;

    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
    /// Throws ConfigError when the rotation is not orthonormal, focal lengths
    /// or near are not positive, or the resolution is empty.
    void validate() const;
};

/// Screen-space footprint of one Gaussian.
struct Splat2D {
    Eigen::Vector2d mean;        ///< pixels
    Eigen::Matrix2d cov;         ///< pixels^2, after low-pass dilation
    Eigen::Vector3d conic;       ///< inverse covariance (a, b, c)
    double depth = 0.0;          ///< camera-space z
    int radius = 0;              ///< footprint half-extent, pixels
    std::size_t index = 0;       ///< source Gaussian
};

inline constexpr double kLowPassDilation = 0.3;

enum class Activation { opacity_trans, opacity_ref, beta_ref, scale };

double activate(double raw, Activation kind);
double sigmoid(double x);
double logit(double p);

/// 3x3 rotation matrix of a (w, x, y, z) quaternion (normalized internally).
Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d& q);

/// Sigma = R S S^T R^T.
Eigen::Matrix3d covariance_from(const Eigen::Vector4d& q, const Eigen::Vector3d& s);

struct ProjectionOptions {
    double dilation = kLowPassDilation;
    double footprint_sigma = 3.0;
};

/// Projects Gaussian i of the scene. Returns nullopt when culled (behind
/// the near plane or with a singular screen covariance).
std::optional<Splat2D> project_gaussian(const GaussianSet& scene, std::size_t i, const Camera& cam,
                                        const ProjectionOptions& opts = {});

struct InitConfig {
    int sh_degree = kMaxShDegree;
    int neighbors = 3;
    double single_point_scale = 0.1;  ///< used when a cloud has one point
    double alpha_trans = 0.1;
    double alpha_ref = 0.1;
    double beta_ref = 0.05;
};

/// Builds a scene from a point cloud: isotropic scales from the mean
/// distance to the nearest neighbours (all available ones when fewer than
/// `neighbors` exist), identity rotations, DC transmitted color from the
/// point color, zero reflected SH.
GaussianSet init_scene(std::span<const Eigen::Vector3d> points, std::span<const Rgb> colors,
                       const InitConfig& config = {});

}  // namespace refsplat
