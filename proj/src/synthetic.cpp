#include <Eigen/Geometry>

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "refsplat/error.hpp"
#include "refsplat/rasterizer.hpp"
#include "refsplat/scene_io.hpp"

namespace refsplat {

namespace {

constexpr double kRingRadius = 2.5;
constexpr double kRingHeight = 0.8;
constexpr double kCameraAngleX = 0.6;
constexpr double kHalfExtent = 0.4;
constexpr double kReflectiveBeta = 0.95;
constexpr double kDiffuseRawBeta = -50.0;

// Uniform [0, 1) from the raw engine output, so draws do not depend on the
// standard library's distribution implementations.
class Draw {
public:
    explicit Draw(std::uint64_t seed) : rng_(seed) {}
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::mt19937_64 rng_;
};

Eigen::Matrix4d ring_pose(double azimuth) {
    const Eigen::Vector3d c(kRingRadius * std::cos(azimuth), kRingRadius * std::sin(azimuth), kRingHeight);
    const Eigen::Vector3d f = (-c).normalized();
    const Eigen::Vector3d right = f.cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::Vector3d down = f.cross(right);
    // OpenGL axes: x right, y up, z backward.
    Eigen::Matrix4d c2w = Eigen::Matrix4d::Identity();
    c2w.block<3, 1>(0, 0) = right;
    c2w.block<3, 1>(0, 1) = -down;
    c2w.block<3, 1>(0, 2) = -f;
    c2w.block<3, 1>(0, 3) = c;
    return c2w;
}

Camera ring_camera(const SyntheticSpec& spec, int k) {
    Camera cam;
    cam.width = spec.width;
    cam.height = spec.height;
    cam.fx = cam.fy = spec.width / (2.0 * std::tan(kCameraAngleX / 2.0));
    cam.cx = spec.width / 2.0;
    cam.cy = spec.height / 2.0;
    set_pose_from_opengl_c2w(cam, ring_pose(2.0 * M_PI * k / spec.n_views));
    return cam;
}

std::string view_name(int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "view_%03d", k);
    return buf;
}

}  // namespace

SyntheticScene make_synthetic_scene(const SyntheticSpec& spec) {
    if (spec.n_gaussians <= 0 || spec.n_views <= 0 || spec.width <= 0 || spec.height <= 0)
        throw ConfigError("synthetic spec must be positive");
    if (!(spec.reflective_fraction >= 0.0 && spec.reflective_fraction <= 1.0))
        throw ConfigError("reflective_fraction must lie in [0, 1]");

    Draw draw(spec.seed);
    SyntheticScene out;
    GaussianSet& gt = out.ground_truth;
    gt.sh_degree = kMaxShDegree;
    gt.resize(static_cast<std::size_t>(spec.n_gaussians));
    const int stride = gt.sh_stride(), per = gt.sh_per_channel();
    const auto n_reflective = static_cast<std::size_t>(std::lround(spec.reflective_fraction * spec.n_gaussians));

    for (std::size_t i = 0; i < gt.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            gt.positions[3 * i + a] = draw.uniform(-kHalfExtent, kHalfExtent);
            gt.log_scales[3 * i + a] = std::log(draw.uniform(0.05, 0.12));
        }
        Eigen::Vector4d q;
        for (int a = 0; a < 4; ++a) q[a] = draw.uniform(-1.0, 1.0);
        q[0] += 1.5;
        q.normalize();
        for (int a = 0; a < 4; ++a) gt.rotations[4 * i + a] = q[a];
        gt.raw_alpha_trans[i] = logit(draw.uniform(0.6, 0.9));
        for (int c = 0; c < 3; ++c) gt.sh_trans[i * stride + c * per] = (draw.uniform(0.1, 0.9) - 0.5) / kShC0;

        const bool reflective = i < n_reflective;
        gt.raw_beta_ref[i] = reflective ? logit(kReflectiveBeta) : kDiffuseRawBeta;
        gt.raw_alpha_ref[i] = logit(reflective ? draw.uniform(0.6, 0.9) : 0.1);
        // Reflected colors come from a separate hue band so both branches stay distinguishable.
        const double hue = draw.uniform();
        for (int c = 0; c < 3; ++c) {
            const double v = 0.5 + 0.4 * std::cos(2.0 * M_PI * (hue + c / 3.0));
            gt.sh_ref[i * stride + c * per] = (v - 0.5) / kShC0;
        }
    }

    for (int k = 0; k < spec.n_views; ++k) {
        out.cameras.push_back(ring_camera(spec, k));
        out.names.push_back(view_name(k));
    }
    return out;
}

SyntheticScene generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
    SyntheticScene scene = make_synthetic_scene(spec);
    fs::create_directories(out_dir);

    nlohmann::json frames = nlohmann::json::array();
    for (std::size_t k = 0; k < scene.cameras.size(); ++k) {
        const Camera& cam = scene.cameras[k];
        const std::string& name = scene.names[k];
        const RenderOutputs r = render_forward(scene.ground_truth, cam, kMaxShDegree, scene.background);
        for (std::size_t p = 0; p < r.ref_map.pixel_count(); ++p) {
            const double m = r.ref_map.data[p];
            if (!(m >= -1e-7 && m <= 1.0 + 1e-7) || r.trans_map.data[p] + m != 1.0)
                throw NumericError("synthetic render of '" + name + "' violates reflection-map bounds");
        }
        write_png(out_dir / "images" / (name + ".png"), r.image);
        write_png(out_dir / "clean" / (name + ".png"), r.image_trans);
        write_pfm(out_dir / "depth" / (name + ".pfm"), r.depth);
        Image mask(cam.width, cam.height, 1);
        for (std::size_t p = 0; p < mask.pixel_count(); ++p) mask.data[p] = r.ref_map.data[p] > 0.5 ? 1.0 : 0.0;
        write_png(out_dir / "mask" / (name + ".png"), mask);

        const Eigen::Matrix4d c2w = opengl_c2w_from_camera(cam);
        nlohmann::json m = nlohmann::json::array();
        for (int row = 0; row < 4; ++row) m.push_back({c2w(row, 0), c2w(row, 1), c2w(row, 2), c2w(row, 3)});
        frames.push_back({{"file_path", "images/" + name + ".png"}, {"transform_matrix", m}});
    }

    nlohmann::json doc;
    doc["camera_angle_x"] = kCameraAngleX;
    doc["w"] = spec.width;
    doc["h"] = spec.height;
    doc["background"] = {scene.background[0], scene.background[1], scene.background[2]};
    doc["aabb"] = {{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
    doc["frames"] = frames;
    std::ofstream(out_dir / "transforms.json") << doc.dump(2) << '\n';

    // Initial cloud: jittered ground-truth means with their base colors.
    Draw jitter(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    const GaussianSet& gt = scene.ground_truth;
    std::vector<Eigen::Vector3d> points;
    std::vector<Rgb> colors;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        Eigen::Vector3d p = gt.position(i);
        for (int a = 0; a < 3; ++a) p[a] += jitter.uniform(-0.01, 0.01);
        points.push_back(p);
        Rgb c;
        for (int ch = 0; ch < 3; ++ch) c[ch] = kShC0 * gt.sh_trans[i * gt.sh_stride() + ch * gt.sh_per_channel()] + 0.5;
        colors.push_back(c);
    }
    write_point_cloud(out_dir / "points3d.ply", points, colors);
    save_checkpoint(out_dir / "ground_truth.ply", gt, 0);
    return scene;
}

}  // namespace refsplat
