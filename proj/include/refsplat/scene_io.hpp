#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "refsplat/gaussian.hpp"
#include "refsplat/image.hpp"

namespace refsplat {

namespace fs = std::filesystem;

// ---- 8-bit PNG

/// Decodes an 8-bit (or 16-bit, reduced) PNG into [0,1] doubles. Gray
/// stays 1 channel; RGBA is composited over `background` when given,
/// otherwise its alpha is dropped.
Image read_png(const fs::path& path, const Rgb* background = nullptr);
/// Writes a 1- or 3-channel image as 8-bit PNG (values clamped, rounded).
void write_png(const fs::path& path, const Image& img);
std::uint8_t quantize8(double v);
/// Round-trips an image through 8-bit quantization.
Image quantize_image(const Image& img);

// ---- PFM depth

/// Grayscale PFM ("Pf"); rows are flipped to top-down.
Image read_pfm(const fs::path& path);
/// Writes little-endian grayscale PFM (scale -1.0) from a 1-channel image.
void write_pfm(const fs::path& path, const Image& depth);

/// Mask as values/255. Resized with nearest neighbour when the size differs
/// from (width, height); `resized` reports that.
Image load_mask(const fs::path& path, int width, int height, bool* resized = nullptr);
Image resize_nearest(const Image& img, int width, int height);

// ---- dataset

struct ViewRecord {
    std::string name;  ///< frame stem
    Camera camera;
    fs::path image_path;
    std::optional<fs::path> pseudo_clean_path;
    std::optional<fs::path> pseudo_depth_path;
    std::optional<fs::path> mask_path;
};

/// A loaded view: camera plus decoded supervision.
struct View {
    std::string name;
    Camera camera;
    Image image;
    std::optional<Image> pseudo_clean;
    std::optional<Image> pseudo_depth;
    std::optional<Image> mask;
};

struct TrainDataset {
    fs::path root;
    std::vector<View> views;
    Rgb background{0.0, 0.0, 0.0};
    Eigen::Vector3d bounds_min = Eigen::Vector3d::Constant(-1.0);
    Eigen::Vector3d bounds_max = Eigen::Vector3d::Constant(1.0);
    /// Optional initial point cloud (points3d.ply), positions and colors.
    std::vector<Eigen::Vector3d> init_points;
    std::vector<Rgb> init_colors;
    /// Non-fatal issues found while loading (resized masks, etc).
    std::vector<std::string> warnings;
};

/// Reads `<root>/<transforms_file>` (default transforms.json) and the
/// images it references, plus clean/, depth/ and mask/ siblings by stem.
TrainDataset load_dataset(const fs::path& root, const std::string& transforms_file = "transforms.json");

/// Converts a camera-to-world matrix with OpenGL axes (y up, z backward)
/// into the internal world-to-camera form (y down, z forward).
void set_pose_from_opengl_c2w(Camera& cam, const Eigen::Matrix4d& c2w);
Eigen::Matrix4d opengl_c2w_from_camera(const Camera& cam);

// ---- point clouds and checkpoints

struct CheckpointMeta {
    int format_version = 1;
    int degree_max = kMaxShDegree;
    long long iteration = 0;
};

inline constexpr int kCheckpointVersion = 1;

/// Property names in file order for an SH degree.
std::vector<std::string> checkpoint_property_names(int degree_max);

/// Binary little-endian PLY with one double property per scalar.
void save_checkpoint(const fs::path& path, const GaussianSet& scene, long long iteration);
/// Loads a checkpoint; SH arrays are zero-padded (or truncated) to
/// `engine_degree` when given.
GaussianSet load_checkpoint(const fs::path& path, CheckpointMeta* meta = nullptr,
                            std::optional<int> engine_degree = kMaxShDegree);

/// Minimal point cloud: x y z and red green blue (uchar) vertices.
void write_point_cloud(const fs::path& path, const std::vector<Eigen::Vector3d>& points, const std::vector<Rgb>& colors);
void read_point_cloud(const fs::path& path, std::vector<Eigen::Vector3d>& points, std::vector<Rgb>& colors);

// ---- synthetic scenes

struct SyntheticSpec {
    int n_gaussians = 50;
    int n_views = 5;
    int width = 64;
    int height = 64;
    double reflective_fraction = 0.3;
    std::uint64_t seed = 0;
};

struct SyntheticScene {
    GaussianSet ground_truth;
    std::vector<Camera> cameras;
    std::vector<std::string> names;
    Rgb background{0.0, 0.0, 0.0};
};

/// Samples the ground-truth scene and cameras without touching disk.
SyntheticScene make_synthetic_scene(const SyntheticSpec& spec);

/// Writes a dataset tree (transforms.json, images/, clean/, depth/, mask/,
/// points3d.ply, ground_truth.ply) and returns the scene it came from.
SyntheticScene generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir);

}  // namespace refsplat
