#include "refsplat/gaussian.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "refsplat/error.hpp"

namespace refsplat {

const char* param_group_name(ParamGroup g) noexcept {
    switch (g) {
        case ParamGroup::position: return "position";
        case ParamGroup::rotation: return "rotation";
        case ParamGroup::log_scale: return "log_scale";
        case ParamGroup::raw_alpha_trans: return "raw_alpha_trans";
        case ParamGroup::raw_alpha_ref: return "raw_alpha_ref";
        case ParamGroup::raw_beta_ref: return "raw_beta_ref";
        case ParamGroup::sh_trans: return "sh_trans";
        case ParamGroup::sh_ref: return "sh_ref";
    }
    return "?";
}

int GaussianArrays::group_width(ParamGroup g) const noexcept {
    switch (g) {
        case ParamGroup::position:
        case ParamGroup::log_scale: return 3;
        case ParamGroup::rotation: return 4;
        case ParamGroup::raw_alpha_trans:
        case ParamGroup::raw_alpha_ref:
        case ParamGroup::raw_beta_ref: return 1;
        case ParamGroup::sh_trans:
        case ParamGroup::sh_ref: return sh_stride();
    }
    return 0;
}

std::vector<double>& GaussianArrays::group(ParamGroup g) {
    return const_cast<std::vector<double>&>(static_cast<const GaussianArrays*>(this)->group(g));
}

const std::vector<double>& GaussianArrays::group(ParamGroup g) const {
    switch (g) {
        case ParamGroup::position: return positions;
        case ParamGroup::rotation: return rotations;
        case ParamGroup::log_scale: return log_scales;
        case ParamGroup::raw_alpha_trans: return raw_alpha_trans;
        case ParamGroup::raw_alpha_ref: return raw_alpha_ref;
        case ParamGroup::raw_beta_ref: return raw_beta_ref;
        case ParamGroup::sh_trans: return sh_trans;
        case ParamGroup::sh_ref: return sh_ref;
    }
    return positions;
}

void GaussianArrays::resize(std::size_t n) {
    for (ParamGroup g : kAllParamGroups) group(g).resize(n * group_width(g), 0.0);
}

GaussianArrays GaussianArrays::zeros_like(const GaussianArrays& other) {
    GaussianArrays z;
    z.sh_degree = other.sh_degree;
    z.resize(other.size());
    return z;
}

Eigen::Vector3d GaussianSet::scale(std::size_t i) const {
    return {std::exp(log_scales[3 * i]), std::exp(log_scales[3 * i + 1]), std::exp(log_scales[3 * i + 2])};
}
double GaussianSet::alpha_trans(std::size_t i) const { return sigmoid(raw_alpha_trans[i]); }
double GaussianSet::alpha_ref(std::size_t i) const { return sigmoid(raw_alpha_ref[i]); }
double GaussianSet::beta_ref(std::size_t i) const { return sigmoid(raw_beta_ref[i]); }

void GaussianSet::append_copy(const GaussianSet& from, std::size_t src) {
    for (ParamGroup g : kAllParamGroups) {
        const int w = group_width(g);
        const auto& s = from.group(g);
        auto& d = group(g);
        // Copy first: `from` may alias *this.
        const std::vector<double> row(s.begin() + static_cast<std::ptrdiff_t>(src * w),
                                      s.begin() + static_cast<std::ptrdiff_t>((src + 1) * w));
        d.insert(d.end(), row.begin(), row.end());
    }
}

void GaussianSet::filter(const std::vector<bool>& keep) {
    const std::size_t n = size();
    for (ParamGroup g : kAllParamGroups) {
        const std::size_t w = group_width(g);
        auto& d = group(g);
        std::size_t out = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!keep[i]) continue;
            if (out != i) std::copy_n(d.begin() + i * w, w, d.begin() + out * w);
            ++out;
        }
        d.resize(out * w);
    }
}

GaussianSet GaussianSet::with_sh_degree(int degree) const {
    if (degree < 0 || degree > kMaxShDegree) throw DomainError("SH degree outside [0, 5]");
    GaussianSet out = *this;
    out.sh_degree = degree;
    const int k_old = sh_per_channel(), k_new = out.sh_per_channel(), k_copy = std::min(k_old, k_new);
    const std::size_t n = size();
    for (auto [src, dst] : {std::pair{&sh_trans, &out.sh_trans}, std::pair{&sh_ref, &out.sh_ref}}) {
        dst->assign(n * 3 * k_new, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c)
                for (int k = 0; k < k_copy; ++k)
                    (*dst)[(i * 3 + c) * k_new + k] = (*src)[(i * 3 + c) * k_old + k];
    }
    return out;
}

void GaussianSet::normalize_rotations() {
    for (std::size_t i = 0; i < size(); ++i) {
        double* q = rotations.data() + 4 * i;
        const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        if (n > 0.0)
            for (int k = 0; k < 4; ++k) q[k] /= n;
    }
}

bool GaussianSet::all_finite() const {
    for (ParamGroup g : kAllParamGroups)
        for (double v : group(g))
            if (!std::isfinite(v)) return false;
    return true;
}

void Camera::validate() const {
    if (width <= 0 || height <= 0) throw ConfigError("camera resolution must be positive");
    if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera focal lengths must be positive");
    if (!(near > 0.0)) throw ConfigError("camera near plane must be positive");
    const double err = (rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= 1e-6)) throw ConfigError("camera rotation is not orthonormal");
    if (!translation.allFinite()) throw ConfigError("camera translation is not finite");
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double activate(double raw, Activation kind) {
    return kind == Activation::scale ? std::exp(raw) : sigmoid(raw);
}

Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d& q_in) {
    const Eigen::Vector4d q = q_in / q_in.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d covariance_from(const Eigen::Vector4d& q, const Eigen::Vector3d& s) {
    if (!q.allFinite() || !s.allFinite()) throw NumericError("covariance_from: non-finite input");
    if (std::abs(q.norm() - 1.0) > 1e-6) throw DomainError("covariance_from: quaternion is not unit length");
    if ((s.array() <= 0.0).any()) throw DomainError("covariance_from: scales must be positive");
    const Eigen::Matrix3d m = rotation_from_quaternion(q) * s.asDiagonal();
    Eigen::Matrix3d sigma;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) sigma(i, j) = sigma(j, i) = m.row(i).dot(m.row(j));
    return sigma;
}

std::optional<Splat2D> project_gaussian(const GaussianSet& scene, std::size_t i, const Camera& cam,
                                        const ProjectionOptions& opts) {
    const Eigen::Vector3d t = cam.rotation * scene.position(i) + cam.translation;
    if (!(t.z() > cam.near)) return std::nullopt;

    const Eigen::Matrix3d r = rotation_from_quaternion(scene.rotation(i));
    const Eigen::Matrix3d m = r * scene.scale(i).asDiagonal();
    const Eigen::Matrix3d sigma = m * m.transpose();

    const double iz = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz * iz,
         0.0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
    const Eigen::Matrix<double, 2, 3> jw = j * cam.rotation;
    Eigen::Matrix2d cov = jw * sigma * jw.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    cov(0, 0) += opts.dilation;
    cov(1, 1) += opts.dilation;

    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;

    Splat2D s;
    s.mean = {cam.fx * t.x() * iz + cam.cx, cam.fy * t.y() * iz + cam.cy};
    s.cov = cov;
    s.conic = {cov(1, 1) / det, -cov(0, 1) / det, cov(0, 0) / det};
    s.depth = t.z();
    s.index = i;
    const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double r_px = std::ceil(opts.footprint_sigma * std::sqrt(lambda_max));
    s.radius = r_px > 1e6 ? 1000000 : static_cast<int>(r_px);
    if (!s.mean.allFinite()) return std::nullopt;
    return s;
}

GaussianSet init_scene(std::span<const Eigen::Vector3d> points, std::span<const Rgb> colors, const InitConfig& config) {
    const std::size_t n = points.size();
    if (n == 0) throw EmptySceneError("init_scene: point cloud is empty");
    if (colors.size() != n) throw ConfigError("init_scene: points and colors differ in length");

    GaussianSet scene;
    scene.sh_degree = config.sh_degree;
    scene.resize(n);

    // k nearest neighbours by an x-sorted sweep with pruning.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return points[a].x() < points[b].x(); });
    const int k = std::max(1, config.neighbors);
    std::vector<double> mean_dist(n, config.single_point_scale);
    for (std::size_t oi = 0; oi < n && n > 1; ++oi) {
        const Eigen::Vector3d& p = points[order[oi]];
        std::vector<double> best;  // sorted ascending, at most k
        auto consider = [&](std::size_t oj) {
            const double d = (points[order[oj]] - p).norm();
            if (best.size() < static_cast<std::size_t>(k) || d < best.back()) {
                best.insert(std::upper_bound(best.begin(), best.end(), d), d);
                if (best.size() > static_cast<std::size_t>(k)) best.pop_back();
            }
        };
        auto bound = [&] { return best.size() < static_cast<std::size_t>(k) ? INFINITY : best.back(); };
        for (std::size_t oj = oi + 1; oj < n && points[order[oj]].x() - p.x() <= bound(); ++oj) consider(oj);
        for (std::size_t oj = oi; oj-- > 0 && p.x() - points[order[oj]].x() <= bound();) consider(oj);
        const double mean = std::accumulate(best.begin(), best.end(), 0.0) / static_cast<double>(best.size());
        mean_dist[order[oi]] = mean > 0.0 ? mean : 1e-7;
    }

    const int stride = scene.sh_stride(), per = scene.sh_per_channel();
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) {
            scene.positions[3 * i + a] = points[i][a];
            scene.log_scales[3 * i + a] = std::log(mean_dist[i]);
        }
        scene.rotations[4 * i] = 1.0;
        for (int c = 0; c < 3; ++c) scene.sh_trans[i * stride + c * per] = (colors[i][c] - 0.5) / kShC0;
        scene.raw_alpha_trans[i] = logit(config.alpha_trans);
        scene.raw_alpha_ref[i] = logit(config.alpha_ref);
        scene.raw_beta_ref[i] = logit(config.beta_ref);
    }
    return scene;
}

}  // namespace refsplat
