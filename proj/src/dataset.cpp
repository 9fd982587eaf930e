#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include <json.hpp>

#include "refsplat/error.hpp"
#include "refsplat/parallel.hpp"
#include "refsplat/scene_io.hpp"

namespace refsplat {

using nlohmann::json;

namespace {

const Eigen::Matrix4d kFlipYZ = Eigen::Vector4d(1.0, -1.0, -1.0, 1.0).asDiagonal();

struct Intrinsics {
    std::optional<double> angle_x, angle_y, fl_x, fl_y, cx, cy;
    std::optional<int> w, h;
};

void read_intrinsics(const json& j, Intrinsics& in) {
    auto num = [&](const char* key, std::optional<double>& out) {
        if (j.contains(key)) out = j.at(key).get<double>();
    };
    num("camera_angle_x", in.angle_x);
    num("camera_angle_y", in.angle_y);
    num("fl_x", in.fl_x);
    num("fl_y", in.fl_y);
    num("cx", in.cx);
    num("cy", in.cy);
    if (j.contains("w")) in.w = j.at("w").get<int>();
    if (j.contains("h")) in.h = j.at("h").get<int>();
}

fs::path resolve_image(const fs::path& root, const std::string& file_path) {
    fs::path p = root / fs::path(file_path).lexically_normal();
    if (fs::exists(p) && fs::is_regular_file(p)) return p;
    if (!p.has_extension()) {
        fs::path with_png = p;
        with_png += ".png";
        if (fs::exists(with_png)) return with_png;
    }
    return p;
}

std::optional<fs::path> sibling(const fs::path& root, const char* dir, const std::string& stem, const char* ext) {
    fs::path p = root / dir / (stem + ext);
    if (fs::exists(p)) return p;
    return std::nullopt;
}

}  // namespace

void set_pose_from_opengl_c2w(Camera& cam, const Eigen::Matrix4d& c2w_gl) {
    const Eigen::Matrix4d c2w = c2w_gl * kFlipYZ;
    Eigen::Matrix3d r_c2w = c2w.topLeftCorner<3, 3>();
    const double err = (r_c2w * r_c2w.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (err > 1e-9) {
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(r_c2w, Eigen::ComputeFullU | Eigen::ComputeFullV);
        r_c2w = svd.matrixU() * svd.matrixV().transpose();
    }
    cam.rotation = r_c2w.transpose();
    cam.translation = -cam.rotation * c2w.topRightCorner<3, 1>();
}

Eigen::Matrix4d opengl_c2w_from_camera(const Camera& cam) {
    Eigen::Matrix4d c2w = Eigen::Matrix4d::Identity();
    c2w.topLeftCorner<3, 3>() = cam.rotation.transpose();
    c2w.topRightCorner<3, 1>() = cam.center();
    return c2w * kFlipYZ;
}

TrainDataset load_dataset(const fs::path& root, const std::string& transforms_file) {
    const fs::path tf = root / transforms_file;
    if (!fs::exists(tf)) throw LoadError("missing transforms file '" + tf.string() + "'");
    json doc;
    try {
        std::ifstream in(tf);
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw LoadError("cannot parse '" + tf.string() + "': " + e.what());
    }

    TrainDataset ds;
    ds.root = root;
    Intrinsics global;
    double near = 0.01;
    std::vector<ViewRecord> records;
    std::vector<Intrinsics> frame_intr;
    try {
        read_intrinsics(doc, global);
        if (doc.contains("background")) {
            const auto bg = doc.at("background").get<std::vector<double>>();
            if (bg.size() != 3) throw LoadError("'background' must have 3 components");
            ds.background = {bg[0], bg[1], bg[2]};
        }
        if (doc.contains("near")) near = doc.at("near").get<double>();
        if (doc.contains("aabb")) {
            const auto box = doc.at("aabb").get<std::vector<std::vector<double>>>();
            if (box.size() != 2 || box[0].size() != 3 || box[1].size() != 3)
                throw LoadError("'aabb' must be [[x,y,z],[x,y,z]]");
            ds.bounds_min = {box[0][0], box[0][1], box[0][2]};
            ds.bounds_max = {box[1][0], box[1][1], box[1][2]};
        }
        if (!doc.contains("frames") || !doc.at("frames").is_array())
            throw LoadError("'" + tf.string() + "' has no frames array");
        for (const auto& f : doc.at("frames")) {
            ViewRecord rec;
            const std::string file = f.at("file_path").get<std::string>();
            rec.image_path = resolve_image(root, file);
            rec.name = fs::path(file).stem().string();
            const auto m = f.at("transform_matrix").get<std::vector<std::vector<double>>>();
            if (m.size() < 3) throw LoadError("frame '" + rec.name + "': transform_matrix must be 4x4");
            Eigen::Matrix4d c2w = Eigen::Matrix4d::Identity();
            for (int r = 0; r < static_cast<int>(std::min<std::size_t>(m.size(), 4)); ++r) {
                if (m[r].size() != 4) throw LoadError("frame '" + rec.name + "': transform_matrix must be 4x4");
                for (int c = 0; c < 4; ++c) c2w(r, c) = m[r][c];
            }
            if (!c2w.allFinite()) throw LoadError("frame '" + rec.name + "': non-finite transform_matrix");
            set_pose_from_opengl_c2w(rec.camera, c2w);
            rec.camera.near = near;
            Intrinsics fi = global;
            read_intrinsics(f, fi);
            rec.pseudo_clean_path = sibling(root, "clean", rec.name, ".png");
            rec.pseudo_depth_path = sibling(root, "depth", rec.name, ".pfm");
            rec.mask_path = sibling(root, "mask", rec.name, ".png");
            records.push_back(std::move(rec));
            frame_intr.push_back(fi);
        }
    } catch (const json::exception& e) {
        throw LoadError("malformed '" + tf.string() + "': " + e.what());
    }
    if (records.empty()) throw LoadError("'" + tf.string() + "' lists no frames");

    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return records[a].name < records[b].name; });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (records[order[i]].name == records[order[i - 1]].name)
            throw LoadError("duplicate frame name '" + records[order[i]].name + "'");

    ds.views.resize(records.size());
    std::vector<std::vector<std::string>> warnings(records.size());
    parallel_for(order.size(), [&](std::size_t k) {
        const ViewRecord& rec = records[order[k]];
        const Intrinsics& in = frame_intr[order[k]];
        View& v = ds.views[k];
        v.name = rec.name;
        v.camera = rec.camera;
        if (!fs::exists(rec.image_path))
            throw LoadError("frame '" + rec.name + "': image '" + rec.image_path.string() + "' does not exist");
        try {
            v.image = read_png(rec.image_path, &ds.background);
        } catch (const LoadError& e) {
            throw LoadError("frame '" + rec.name + "': " + e.what());
        }
        if (v.image.channels == 1) {
            Image rgb(v.image.width, v.image.height, 3);
            for (std::size_t p = 0; p < rgb.pixel_count(); ++p)
                for (int c = 0; c < 3; ++c) rgb.data[3 * p + c] = v.image.data[p];
            v.image = std::move(rgb);
        }
        const int W = v.image.width, H = v.image.height;
        if ((in.w && *in.w != W) || (in.h && *in.h != H))
            throw LoadError("frame '" + rec.name + "': image is " + std::to_string(W) + "x" + std::to_string(H) +
                            " but intrinsics declare " + std::to_string(in.w.value_or(W)) + "x" +
                            std::to_string(in.h.value_or(H)));
        Camera& cam = v.camera;
        cam.width = W;
        cam.height = H;
        if (in.fl_x) cam.fx = *in.fl_x;
        else if (in.angle_x) cam.fx = W / (2.0 * std::tan(*in.angle_x / 2.0));
        else throw LoadError("frame '" + rec.name + "': no camera_angle_x or fl_x");
        if (in.fl_y) cam.fy = *in.fl_y;
        else if (in.angle_y) cam.fy = H / (2.0 * std::tan(*in.angle_y / 2.0));
        else cam.fy = cam.fx;
        cam.cx = in.cx.value_or(W / 2.0);
        cam.cy = in.cy.value_or(H / 2.0);
        try {
            cam.validate();
        } catch (const ConfigError& e) {
            throw LoadError("frame '" + rec.name + "': " + e.what());
        }

        if (rec.pseudo_clean_path) {
            Image clean = read_png(*rec.pseudo_clean_path, &ds.background);
            if (clean.channels == 1) {
                Image rgb(clean.width, clean.height, 3);
                for (std::size_t p = 0; p < rgb.pixel_count(); ++p)
                    for (int c = 0; c < 3; ++c) rgb.data[3 * p + c] = clean.data[p];
                clean = std::move(rgb);
            }
            if (!clean.same_extent(v.image))
                throw LoadError("frame '" + rec.name + "': pseudo-clean image resolution differs from the image");
            v.pseudo_clean = std::move(clean);
        }
        if (rec.pseudo_depth_path) {
            Image depth;
            try {
                depth = read_pfm(*rec.pseudo_depth_path);
            } catch (const FormatError& e) {
                throw LoadError("frame '" + rec.name + "': " + e.what());
            }
            if (!depth.same_extent(v.image))
                throw LoadError("frame '" + rec.name + "': pseudo-depth resolution differs from the image");
            v.pseudo_depth = std::move(depth);
        }
        if (rec.mask_path) {
            bool resized = false;
            v.mask = load_mask(*rec.mask_path, W, H, &resized);
            if (resized) warnings[k].push_back("frame '" + rec.name + "': mask resized to " + std::to_string(W) + "x" +
                                               std::to_string(H));
        }
    });
    for (auto& w : warnings) ds.warnings.insert(ds.warnings.end(), w.begin(), w.end());

    const fs::path cloud = root / "points3d.ply";
    if (fs::exists(cloud)) {
        read_point_cloud(cloud, ds.init_points, ds.init_colors);
        if (!doc.contains("aabb") && !ds.init_points.empty()) {
            ds.bounds_min = ds.bounds_max = ds.init_points.front();
            for (const auto& p : ds.init_points) {
                ds.bounds_min = ds.bounds_min.cwiseMin(p);
                ds.bounds_max = ds.bounds_max.cwiseMax(p);
            }
        }
    }
    return ds;
}

}  // namespace refsplat
