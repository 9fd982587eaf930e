#pragma once

#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "refsplat/gaussian.hpp"
#include "refsplat/rasterizer.hpp"
#include "refsplat/scene_io.hpp"

namespace testutil {

using namespace refsplat;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform(double lo = 0.0, double hi = 1.0) {
        return lo + (hi - lo) * (static_cast<double>(eng_() >> 11) * 0x1.0p-53);
    }
    double normal() {
        const double u1 = uniform(1e-300, 1.0), u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    std::uint64_t next() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

/// Camera at the origin looking down +z (world = camera space).
inline Camera front_camera(int w, int h, double focal) {
    Camera cam;
    cam.width = w;
    cam.height = h;
    cam.fx = cam.fy = focal;
    cam.cx = w / 2.0;
    cam.cy = h / 2.0;
    return cam;
}

/// Camera at `center` looking at `target` (world z up).
inline Camera look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target, int w, int h, double focal) {
    Camera cam = front_camera(w, h, focal);
    const Eigen::Vector3d f = (target - center).normalized();
    Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
    if (std::abs(f.dot(up)) > 0.99) up = Eigen::Vector3d::UnitY();
    const Eigen::Vector3d right = f.cross(up).normalized();
    const Eigen::Vector3d down = f.cross(right);
    cam.rotation.row(0) = right;
    cam.rotation.row(1) = down;
    cam.rotation.row(2) = f;
    cam.translation = -cam.rotation * center;
    return cam;
}

/// A handful of Gaussians in front of front_camera, with random SH up to
/// `degree` kept small so colors stay inside the clamp region.
inline GaussianSet micro_scene(Rng& rng, int n, int degree = 2, double depth_lo = 3.0, double depth_hi = 5.0) {
    GaussianSet s;
    s.sh_degree = kMaxShDegree;
    s.resize(static_cast<std::size_t>(n));
    const int stride = s.sh_stride(), per = s.sh_per_channel();
    for (int i = 0; i < n; ++i) {
        const double z = rng.uniform(depth_lo, depth_hi);
        s.positions[3 * i] = rng.uniform(-0.35, 0.35) * z / 2.0;
        s.positions[3 * i + 1] = rng.uniform(-0.35, 0.35) * z / 2.0;
        s.positions[3 * i + 2] = z;
        Eigen::Vector4d q(1.0 + rng.uniform(), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        q.normalize();
        for (int a = 0; a < 4; ++a) s.rotations[4 * i + a] = q[a];
        for (int a = 0; a < 3; ++a) s.log_scales[3 * i + a] = std::log(rng.uniform(0.15, 0.35));
        s.raw_alpha_trans[i] = rng.uniform(-1.0, 1.5);
        s.raw_alpha_ref[i] = rng.uniform(-1.0, 1.5);
        s.raw_beta_ref[i] = rng.uniform(-2.0, 1.0);
        for (int c = 0; c < 3; ++c) {
            s.sh_trans[i * stride + c * per] = rng.uniform(-0.6, 0.6);
            s.sh_ref[i * stride + c * per] = rng.uniform(-0.6, 0.6);
            for (int k = 1; k < sh_coeff_count(degree); ++k) {
                s.sh_trans[i * stride + c * per + k] = rng.uniform(-0.08, 0.08);
                s.sh_ref[i * stride + c * per + k] = rng.uniform(-0.08, 0.08);
            }
        }
    }
    return s;
}

/// Settings under which the rendered buffers are smooth in the parameters.
inline RenderSettings smooth_settings() {
    RenderSettings st;
    st.max_weight = 1.0;
    st.min_weight = 0.0;
    st.stop_transmittance = 0.0;
    st.footprint_sigma = 12.0;
    return st;
}

inline Image random_image(Rng& rng, int w, int h, int c, double lo = 0.0, double hi = 1.0) {
    Image img(w, h, c);
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

/// Fresh directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("refsplat_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil
