#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "helpers.hpp"
#include "refsplat/error.hpp"

using namespace testutil;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << bytes;
}

// Every regular file under root, relative path -> contents.
std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

json identity_frame(const std::string& file) {
    return {{"file_path", file},
            {"transform_matrix", {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 3}, {0, 0, 0, 1}}}};
}

void write_transforms(const fs::path& root, const json& j) { spit(root / "transforms.json", j.dump(2)); }

// Removes one double property from a binary checkpoint.
void drop_property(const fs::path& path, const std::string& name) {
    const std::string bytes = slurp(path);
    const std::size_t end = bytes.find("end_header\n") + std::strlen("end_header\n");
    std::string header = bytes.substr(0, end);
    std::vector<std::string> props;
    std::size_t pos = 0;
    while ((pos = header.find("property double ", pos)) != std::string::npos) {
        const std::size_t eol = header.find('\n', pos);
        props.push_back(header.substr(pos + 16, eol - pos - 16));
        pos = eol;
    }
    const auto idx = static_cast<std::size_t>(std::find(props.begin(), props.end(), name) - props.begin());
    REQUIRE(idx < props.size());
    const std::string line = "property double " + name + "\n";
    header.erase(header.find(line), line.size());
    std::string body;
    const std::size_t stride = props.size() * 8;
    for (std::size_t off = end; off + stride <= bytes.size(); off += stride)
        for (std::size_t k = 0; k < props.size(); ++k)
            if (k != idx) body += bytes.substr(off + k * 8, 8);
    spit(path, header + body);
}

}  // namespace

TEST_CASE("PFM round trip and fixed bytes") {
    const fs::path dir = temp_dir("pfm");
    Rng rng(1);
    Image d = random_image(rng, 7, 5, 1, 0.0, 9.0);
    for (double& v : d.data) v = static_cast<float>(v);
    write_pfm(dir / "a.pfm", d);
    CHECK(read_pfm(dir / "a.pfm").data == d.data);

    // Bottom-to-top rows on disk.
    Image two(1, 2, 1);
    two.data = {1.0, 2.0};
    write_pfm(dir / "rows.pfm", two);
    const std::string raw = slurp(dir / "rows.pfm");
    float first;
    std::memcpy(&first, raw.data() + raw.size() - 8, 4);
    CHECK(first == 2.0f);

    float v = 2.5f;
    spit(dir / "one.pfm", std::string("Pf\n1 1\n-1.0\n") + std::string(reinterpret_cast<char*>(&v), 4));
    CHECK(read_pfm(dir / "one.pfm").data == std::vector<double>{2.5});

    spit(dir / "color.pfm", std::string("PF\n1 1\n-1.0\n") + std::string(12, '\0'));
    CHECK_THROWS_AS(read_pfm(dir / "color.pfm"), FormatError);
    spit(dir / "dims.pfm", "Pf\n0 3\n-1.0\n");
    CHECK_THROWS_AS(read_pfm(dir / "dims.pfm"), FormatError);
    spit(dir / "short.pfm", "Pf\n2 2\n-1.0\nabc");
    try {
        read_pfm(dir / "short.pfm");
        FAIL("short payload accepted");
    } catch (const FormatError& e) {
        CHECK(e.offset() > 0);
    }
}

TEST_CASE("big-endian PFM") {
    const fs::path dir = temp_dir("pfm_be");
    const float v = 3.25f;
    char b[4];
    std::memcpy(b, &v, 4);
    std::reverse(b, b + 4);
    spit(dir / "be.pfm", std::string("Pf\n1 1\n1.0\n") + std::string(b, 4));
    CHECK(read_pfm(dir / "be.pfm").data == std::vector<double>{3.25});
}

TEST_CASE("masks") {
    const fs::path dir = temp_dir("mask");
    write_png(dir / "full.png", Image(4, 3, 1, 1.0));
    write_png(dir / "none.png", Image(4, 3, 1, 0.0));
    write_png(dir / "mid.png", Image(4, 3, 1, 128.0 / 255.0));
    for (double v : load_mask(dir / "full.png", 4, 3).data) CHECK(v == 1.0);
    for (double v : load_mask(dir / "none.png", 4, 3).data) CHECK(v == 0.0);
    CHECK(load_mask(dir / "mid.png", 4, 3).data[0] == doctest::Approx(0.50196).epsilon(1e-5));
    bool resized = false;
    const Image big = load_mask(dir / "full.png", 8, 6, &resized);
    CHECK(resized);
    CHECK(big.width == 8);
    spit(dir / "junk.png", "not a png");
    CHECK_THROWS(load_mask(dir / "junk.png", 4, 3));
}

TEST_CASE("PNG round trip stays within quantization") {
    const fs::path dir = temp_dir("png");
    Rng rng(2);
    const Image img = random_image(rng, 9, 6, 3);
    write_png(dir / "a.png", img);
    const Image back = read_png(dir / "a.png");
    for (std::size_t k = 0; k < img.data.size(); ++k) CHECK(std::abs(back.data[k] - img.data[k]) <= 0.5 / 255.0 + 1e-12);
    CHECK(back.data == quantize_image(img).data);
}

TEST_CASE("checkpoint round trip") {
    const fs::path dir = temp_dir("ckpt");
    Rng rng(3);
    GaussianSet s = micro_scene(rng, 50, 5);
    for (double& v : s.sh_ref) v += rng.normal();
    save_checkpoint(dir / "a.ply", s, 1234);
    CheckpointMeta meta;
    const GaussianSet back = load_checkpoint(dir / "a.ply", &meta);
    CHECK(back == s);
    CHECK(meta.iteration == 1234);
    CHECK(meta.degree_max == 5);
    CHECK(meta.format_version == kCheckpointVersion);

    const auto names = checkpoint_property_names(5);
    CHECK(names.size() == 3 + 4 + 3 + 3 + 2 * 3 * 36);
    CHECK(names[0] == "x");
    CHECK(names[10] == "raw_alpha_trans");
    CHECK(names[12] == "raw_beta_ref");
}

TEST_CASE("checkpoint schema errors") {
    const fs::path dir = temp_dir("ckpt_schema");
    Rng rng(4);
    save_checkpoint(dir / "a.ply", micro_scene(rng, 3, 1), 0);
    drop_property(dir / "a.ply", "raw_beta_ref");
    try {
        load_checkpoint(dir / "a.ply");
        FAIL("missing property accepted");
    } catch (const SchemaError& e) {
        CHECK(e.missing() == std::vector<std::string>{"raw_beta_ref"});
        CHECK(std::string(e.what()).find("raw_beta_ref") != std::string::npos);
    }

    save_checkpoint(dir / "b.ply", micro_scene(rng, 2, 1), 0);
    std::string bytes = slurp(dir / "b.ply");
    const std::string tag = "refsplat_format_version " + std::to_string(kCheckpointVersion);
    bytes.replace(bytes.find(tag), tag.size(), "refsplat_format_version 9");
    spit(dir / "b.ply", bytes);
    CHECK_THROWS_AS(load_checkpoint(dir / "b.ply"), SchemaError);

    spit(dir / "c.ply", "plx\n");
    CHECK_THROWS_AS(load_checkpoint(dir / "c.ply"), FormatError);
}

TEST_CASE("lower-degree checkpoints are zero-padded") {
    const fs::path dir = temp_dir("ckpt_pad");
    Rng rng(5);
    const GaussianSet s5 = micro_scene(rng, 4, 3);
    const GaussianSet s3 = s5.with_sh_degree(3);
    save_checkpoint(dir / "d3.ply", s3, 7);
    CheckpointMeta meta;
    const GaussianSet back = load_checkpoint(dir / "d3.ply", &meta);
    CHECK(meta.degree_max == 3);
    CHECK(back.sh_degree == 5);
    CHECK(back == s3.with_sh_degree(5));
    CHECK(load_checkpoint(dir / "d3.ply", nullptr, std::nullopt).sh_degree == 3);
}

TEST_CASE("point clouds") {
    const fs::path dir = temp_dir("cloud");
    const std::vector<Eigen::Vector3d> pts{{0.1, 0.2, 0.3}, {-1, 2, 5}};
    const std::vector<Rgb> cols{{1, 0, 0}, {0, 0.5, 1}};
    write_point_cloud(dir / "p.ply", pts, cols);
    std::vector<Eigen::Vector3d> p2;
    std::vector<Rgb> c2;
    read_point_cloud(dir / "p.ply", p2, c2);
    CHECK(p2 == pts);
    CHECK(c2[1][1] == doctest::Approx(128.0 / 255.0));

    spit(dir / "ascii.ply",
         "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
         "end_header\n1 2 3\n4 5 6\n");
    read_point_cloud(dir / "ascii.ply", p2, c2);
    CHECK(p2[1] == Eigen::Vector3d(4, 5, 6));
    CHECK(c2[0] == Rgb{0.5, 0.5, 0.5});
}

TEST_CASE("minimal dataset and intrinsics") {
    const fs::path dir = temp_dir("ds_min");
    write_png(dir / "images" / "0001.png", Image(800, 2, 3, 0.5));
    write_transforms(dir, {{"camera_angle_x", M_PI / 2}, {"frames", {identity_frame("images/0001")}}});
    const TrainDataset ds = load_dataset(dir);
    REQUIRE(ds.views.size() == 1);
    CHECK(ds.views[0].camera.fx == doctest::Approx(400.0).epsilon(1e-14));
    CHECK(ds.views[0].camera.fy == ds.views[0].camera.fx);
    CHECK(ds.views[0].camera.cx == 400.0);
    CHECK_FALSE(ds.views[0].pseudo_clean);
    CHECK_FALSE(ds.views[0].pseudo_depth);
    CHECK_FALSE(ds.views[0].mask);
    // OpenGL camera at z = 3 looking down -z: the internal camera looks at the origin along +z.
    const Camera& cam = ds.views[0].camera;
    CHECK((cam.center() - Eigen::Vector3d(0, 0, 3)).norm() < 1e-12);
    CHECK((cam.rotation * Eigen::Vector3d(0, 0, -1) - Eigen::Vector3d(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("optional siblings, ordering and per-frame intrinsics") {
    const fs::path dir = temp_dir("ds_full");
    for (const char* n : {"b", "a", "c"}) write_png(dir / "images" / (std::string(n) + ".png"), Image(6, 4, 3, 0.2));
    write_png(dir / "clean" / "a.png", Image(6, 4, 3, 0.1));
    write_pfm(dir / "depth" / "a.pfm", Image(6, 4, 1, 2.0));
    write_png(dir / "mask" / "b.png", Image(3, 2, 1, 1.0));
    json frames = json::array();
    for (const char* n : {"c", "a", "b"}) frames.push_back(identity_frame(std::string("images/") + n + ".png"));
    frames[0]["fl_x"] = 9.0;
    frames[0]["fl_y"] = 7.0;
    frames[0]["cx"] = 2.5;
    write_transforms(dir, {{"camera_angle_x", 1.0}, {"background", {0.1, 0.2, 0.3}}, {"frames", frames}});
    const TrainDataset ds = load_dataset(dir);
    REQUIRE(ds.views.size() == 3);
    CHECK(ds.views[0].name == "a");
    CHECK(ds.views[1].name == "b");
    CHECK(ds.views[2].name == "c");
    CHECK(ds.views[0].pseudo_clean);
    CHECK(ds.views[0].pseudo_depth);
    CHECK(ds.views[0].pseudo_depth->data[0] == 2.0);
    CHECK(ds.views[1].mask);
    CHECK(ds.views[1].mask->width == 6);
    CHECK(ds.warnings.size() == 1);
    CHECK(ds.views[2].camera.fx == 9.0);
    CHECK(ds.views[2].camera.fy == 7.0);
    CHECK(ds.views[2].camera.cx == 2.5);
    CHECK(ds.background == Rgb{0.1, 0.2, 0.3});
}

TEST_CASE("dataset load errors name the frame") {
    const fs::path dir = temp_dir("ds_err");
    CHECK_THROWS_AS(load_dataset(dir), LoadError);

    write_png(dir / "images" / "f1.png", Image(6, 4, 3, 0.2));
    json frame = identity_frame("images/f1.png");
    frame["w"] = 8;
    write_transforms(dir, {{"camera_angle_x", 1.0}, {"frames", {frame}}});
    try {
        load_dataset(dir);
        FAIL("resolution mismatch accepted");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("f1") != std::string::npos);
    }

    write_transforms(dir, {{"camera_angle_x", 1.0}, {"frames", {identity_frame("images/missing.png")}}});
    try {
        load_dataset(dir);
        FAIL("missing image accepted");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("missing") != std::string::npos);
    }

    write_transforms(dir, {{"camera_angle_x", 1.0}, {"frames", {identity_frame("images/f1.png")}}});
    write_png(dir / "clean" / "f1.png", Image(5, 4, 3, 0.2));
    CHECK_THROWS_AS(load_dataset(dir), LoadError);
}

TEST_CASE("pose conversion round trip") {
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
        const Camera a = look_at({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)}, {0, 0, 0.1}, 8, 8, 5.0);
        Camera b = front_camera(8, 8, 5.0);
        set_pose_from_opengl_c2w(b, opengl_c2w_from_camera(a));
        CHECK((a.rotation - b.rotation).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.translation - b.translation).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("synthetic generator is deterministic and self-consistent") {
    const fs::path a = temp_dir("syn_a"), b = temp_dir("syn_b");
    SyntheticSpec spec;
    spec.seed = 42;
    const SyntheticScene scene = generate_synthetic(spec, a);
    generate_synthetic(spec, b);
    CHECK(tree(a) == tree(b));

    const TrainDataset ds = load_dataset(a);
    REQUIRE(ds.views.size() == 5);
    CHECK(scene.ground_truth.size() == 50);
    CHECK(load_checkpoint(a / "ground_truth.ply") == scene.ground_truth);
    double worst_img = 0.0, worst_depth = 0.0;
    for (std::size_t k = 0; k < ds.views.size(); ++k) {
        const View& v = ds.views[k];
        CHECK(v.image.width == 64);
        CHECK((v.camera.rotation - scene.cameras[k].rotation).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((v.camera.translation - scene.cameras[k].translation).cwiseAbs().maxCoeff() < 1e-12);
        const RenderOutputs r = render_forward(scene.ground_truth, v.camera, kMaxShDegree, ds.background);
        const Image q = quantize_image(r.image);
        for (std::size_t i = 0; i < q.data.size(); ++i) worst_img = std::max(worst_img, std::abs(q.data[i] - v.image.data[i]));
        for (std::size_t i = 0; i < r.depth.data.size(); ++i)
            worst_depth = std::max(worst_depth, std::abs(static_cast<float>(r.depth.data[i]) - v.pseudo_depth->data[i]));
        REQUIRE(v.pseudo_clean);
        REQUIRE(v.mask);
    }
    CHECK(worst_img <= 1e-6);
    CHECK(worst_depth <= 1e-6);

    spec.seed = 43;
    const fs::path c = temp_dir("syn_c");
    generate_synthetic(spec, c);
    CHECK(tree(a) != tree(c));
}

TEST_CASE("a synthetic scene without reflectors has empty masks") {
    const fs::path dir = temp_dir("syn_diffuse");
    SyntheticSpec spec;
    spec.reflective_fraction = 0.0;
    spec.n_views = 3;
    spec.width = spec.height = 32;
    generate_synthetic(spec, dir);
    const TrainDataset ds = load_dataset(dir);
    for (const View& v : ds.views) {
        for (std::size_t i = 0; i < v.image.data.size(); ++i)
            CHECK(std::abs(v.image.data[i] - v.pseudo_clean->data[i]) <= 1e-6);
        for (double m : v.mask->data) CHECK(m == 0.0);
    }
}

TEST_CASE("synthetic reflectors produce masks") {
    const SyntheticScene s = make_synthetic_scene({});
    std::size_t reflective = 0;
    for (std::size_t i = 0; i < s.ground_truth.size(); ++i) reflective += s.ground_truth.beta_ref(i) > 0.5;
    CHECK(reflective == 15);
    CHECK_THROWS_AS(make_synthetic_scene({0, 5, 64, 64, 0.3, 0}), ConfigError);
    CHECK_THROWS_AS(make_synthetic_scene({50, 5, 64, 64, 1.5, 0}), ConfigError);
}
