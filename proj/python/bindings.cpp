#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli.hpp"
#include "refsplat/error.hpp"
#include "refsplat/losses.hpp"
#include "refsplat/parallel.hpp"
#include "refsplat/rasterizer.hpp"
#include "refsplat/scene_io.hpp"
#include "refsplat/sh.hpp"
#include "refsplat/trainer.hpp"

namespace py = pybind11;
using namespace refsplat;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) for one channel, (H, W, C) otherwise.
Array to_numpy(const Image& img) {
    std::vector<py::ssize_t> shape{img.height, img.width};
    if (img.channels != 1) shape.push_back(img.channels);
    Array a(shape);
    std::copy(img.data.begin(), img.data.end(), a.mutable_data());
    return a;
}

Image from_numpy(const Array& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("expected an (H, W) or (H, W, C) array");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1);
    std::copy(a.data(), a.data() + a.size(), img.data.begin());
    return img;
}

py::dict outputs_dict(const RenderOutputs& r) {
    py::dict d;
    d["image"] = to_numpy(r.image);
    d["image_raw"] = to_numpy(r.image_raw);
    d["color_trans"] = to_numpy(r.color_trans);
    d["color_ref"] = to_numpy(r.color_ref);
    d["ref_map"] = to_numpy(r.ref_map);
    d["trans_map"] = to_numpy(r.trans_map);
    d["image_trans"] = to_numpy(r.image_trans);
    d["image_ref"] = to_numpy(r.image_ref);
    d["depth"] = to_numpy(r.depth);
    d["coverage"] = to_numpy(r.coverage);
    return d;
}

// Per-Gaussian views of the flat arrays, shaped (N, width).
Array group_array(const GaussianSet& s, ParamGroup g) {
    const auto& v = s.group(g);
    const py::ssize_t w = s.group_width(g);
    Array a({static_cast<py::ssize_t>(s.size()), w});
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

void set_group(GaussianSet& s, ParamGroup g, const Array& a) {
    const std::size_t w = static_cast<std::size_t>(s.group_width(g));
    if (static_cast<std::size_t>(a.size()) != s.size() * w)
        throw py::value_error(std::string(param_group_name(g)) + ": expected " + std::to_string(s.size()) + " x " +
                              std::to_string(w) + " values");
    std::copy(a.data(), a.data() + a.size(), s.group(g).begin());
}

py::dict breakdown_dict(const LossBreakdown& b) {
    py::dict d;
    d["total"] = b.total;
    d["l_rgb"] = b.l_rgb;
    d["l_I"] = b.l_I;
    d["l_I_trans"] = b.l_I_trans;
    d["l_init"] = b.l_init;
    d["l_depth"] = b.l_depth;
    d["l_bi"] = b.l_bi;
    d["l_ref"] = b.l_ref;
    d["depth_valid"] = b.depth_valid;
    return d;
}

}  // namespace

PYBIND11_MODULE(_refsplat, m) {
    m.doc() = "Dual-branch Gaussian splatting for scenes with reflections";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
    py::register_exception<SchemaError>(m, "SchemaError", PyExc_IOError);
    py::register_exception<LoadError>(m, "LoadError", PyExc_IOError);
    py::register_exception<EmptySceneError>(m, "EmptySceneError", PyExc_ValueError);
    py::register_exception<NumericAbort>(m, "NumericAbort", PyExc_ArithmeticError);

    m.attr("MAX_SH_DEGREE") = kMaxShDegree;

    // ---- spherical harmonics
    m.def("legendre_assoc", &legendre_assoc, py::arg("l"), py::arg("m"), py::arg("x"));
    m.def("sh_normalization", &sh_normalization, py::arg("l"), py::arg("m"));
    m.def(
        "sh_basis", [](int l, int mm, const Eigen::Vector3d& d) { return sh_basis(l, mm, Direction(d)); },
        py::arg("l"), py::arg("m"), py::arg("direction"));
    m.def(
        "eval_sh_color",
        [](const std::vector<double>& coeffs, const Eigen::Vector3d& d, int degree, bool clamp) {
            int degree_max = 0;
            while (3 * sh_coeff_count(degree_max) < static_cast<int>(coeffs.size())) ++degree_max;
            if (3 * sh_coeff_count(degree_max) != static_cast<int>(coeffs.size()))
                throw py::value_error("coefficient count must be 3 * (d + 1)^2");
            ShCoeffs c(degree_max);
            c.coeffs = coeffs;
            return clamp ? eval_sh_color_clamped(c, Direction(d), degree) : eval_sh_color(c, Direction(d), degree);
        },
        py::arg("coeffs"), py::arg("direction"), py::arg("degree"), py::arg("clamp") = false,
        "Coefficients are channel-major: 3 blocks of (degree_max + 1)^2.");

    // ---- scene
    py::class_<Camera>(m, "Camera")
        .def(py::init<>())
        .def_readwrite("width", &Camera::width)
        .def_readwrite("height", &Camera::height)
        .def_readwrite("fx", &Camera::fx)
        .def_readwrite("fy", &Camera::fy)
        .def_readwrite("cx", &Camera::cx)
        .def_readwrite("cy", &Camera::cy)
        .def_readwrite("rotation", &Camera::rotation)
        .def_readwrite("translation", &Camera::translation)
        .def_readwrite("near", &Camera::near)
        .def_property_readonly("center", &Camera::center)
        .def("set_pose_from_opengl_c2w", [](Camera& c, const Eigen::Matrix4d& m4) { set_pose_from_opengl_c2w(c, m4); })
        .def("opengl_c2w", [](const Camera& c) { return opengl_c2w_from_camera(c); });

    py::class_<GaussianSet>(m, "GaussianSet")
        .def(py::init([](std::size_t n, int degree) {
                 GaussianSet s;
                 s.sh_degree = degree;
                 s.resize(n);
                 for (std::size_t i = 0; i < n; ++i) s.rotations[4 * i] = 1.0;
                 return s;
             }),
             py::arg("n") = 0, py::arg("sh_degree") = kMaxShDegree)
        .def("__len__", &GaussianSet::size)
        .def_readonly("sh_degree", &GaussianSet::sh_degree)
        .def("__eq__", [](const GaussianSet& a, const GaussianSet& b) { return a == b; })
        .def("with_sh_degree", &GaussianSet::with_sh_degree)
        .def("alpha_trans", [](const GaussianSet& s) {
            std::vector<double> v(s.size());
            for (std::size_t i = 0; i < s.size(); ++i) v[i] = s.alpha_trans(i);
            return v;
        })
        .def("beta_ref", [](const GaussianSet& s) {
            std::vector<double> v(s.size());
            for (std::size_t i = 0; i < s.size(); ++i) v[i] = s.beta_ref(i);
            return v;
        })
        .def("get", [](const GaussianSet& s, const std::string& name) {
            for (ParamGroup g : kAllParamGroups)
                if (name == param_group_name(g)) return group_array(s, g);
            throw py::key_error(name);
        })
        .def("set", [](GaussianSet& s, const std::string& name, const Array& a) {
            for (ParamGroup g : kAllParamGroups)
                if (name == param_group_name(g)) return set_group(s, g, a);
            throw py::key_error(name);
        })
        .def_property_readonly_static("groups", [](py::object) {
            std::vector<std::string> names;
            for (ParamGroup g : kAllParamGroups) names.emplace_back(param_group_name(g));
            return names;
        });

    py::class_<RenderSettings>(m, "RenderSettings")
        .def(py::init<>())
        .def_readwrite("max_weight", &RenderSettings::max_weight)
        .def_readwrite("min_weight", &RenderSettings::min_weight)
        .def_readwrite("stop_transmittance", &RenderSettings::stop_transmittance)
        .def_readwrite("footprint_sigma", &RenderSettings::footprint_sigma)
        .def_readwrite("dilation", &RenderSettings::dilation)
        .def_readwrite("tile_size", &RenderSettings::tile_size)
        .def_readwrite("depth_min_coverage", &RenderSettings::depth_min_coverage);

    // ---- rendering
    m.def(
        "render",
        [](const GaussianSet& s, const Camera& cam, std::optional<int> degree, const Rgb& bg, const RenderSettings& st) {
            RenderOutputs r;
            {
                py::gil_scoped_release release;
                r = render_forward(s, cam, degree.value_or(s.sh_degree), bg, st);
            }
            return outputs_dict(r);
        },
        py::arg("scene"), py::arg("camera"), py::arg("degree") = py::none(), py::arg("background") = Rgb{0, 0, 0},
        py::arg("settings") = RenderSettings{});
    m.def(
        "render_edited",
        [](const GaussianSet& s, const Camera& cam, const Array& mask, double scale, std::optional<int> degree,
           const Rgb& bg, const RenderSettings& st) {
            EditSpec e{from_numpy(mask), scale};
            RenderOutputs r;
            {
                py::gil_scoped_release release;
                r = render_edited(s, cam, degree.value_or(s.sh_degree), bg, e, st);
            }
            return outputs_dict(r);
        },
        py::arg("scene"), py::arg("camera"), py::arg("mask"), py::arg("scale"), py::arg("degree") = py::none(),
        py::arg("background") = Rgb{0, 0, 0}, py::arg("settings") = RenderSettings{});
    m.def("set_thread_count", &set_thread_count, py::arg("n"), "0 restores automatic parallelism.");
    m.def("thread_count", &thread_count);

    // ---- losses and metrics
    m.def("psnr", [](const Array& a, const Array& b) { return psnr(from_numpy(a), from_numpy(b)); });
    m.def("ssim", [](const Array& a, const Array& b) { return ssim_metric(from_numpy(a), from_numpy(b)); });
    m.def("l_ref_smooth", [](const Array& a) { return l_ref_smooth(from_numpy(a)); });
    m.def(
        "l_bi", [](const Array& depth, const Array& colors, double gamma) {
            return l_bi(from_numpy(depth), from_numpy(colors), gamma);
        },
        py::arg("depth"), py::arg("colors"), py::arg("gamma") = 0.1);
    m.def(
        "total_loss",
        [](double l_I, double l_I_trans, double l_init, double l_depth, double l_bi, double l_ref, int iteration) {
            return breakdown_dict(total_loss({l_I, l_I_trans, l_init, l_depth, l_bi, l_ref}, LossWeights{}, iteration));
        },
        py::arg("l_I"), py::arg("l_I_trans"), py::arg("l_init"), py::arg("l_depth"), py::arg("l_bi"), py::arg("l_ref"),
        py::arg("iteration") = 0, "Weighted total with the default coefficients.");

    // ---- files
    m.def("read_png", [](const fs::path& p) { return to_numpy(read_png(p)); });
    m.def("write_png", [](const fs::path& p, const Array& a) { write_png(p, from_numpy(a)); });
    m.def("read_pfm", [](const fs::path& p) { return to_numpy(read_pfm(p)); });
    m.def("write_pfm", [](const fs::path& p, const Array& a) { write_pfm(p, from_numpy(a)); });
    m.def(
        "load_checkpoint",
        [](const fs::path& p) {
            CheckpointMeta meta;
            GaussianSet s = load_checkpoint(p, &meta);
            return py::make_tuple(s, meta.iteration);
        },
        py::arg("path"), "Returns (scene, iteration).");
    m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("scene"), py::arg("iteration") = 0);
    m.def(
        "load_dataset",
        [](const fs::path& root) {
            const TrainDataset ds = load_dataset(root);
            py::list views;
            for (const View& v : ds.views) {
                py::dict d;
                d["name"] = v.name;
                d["camera"] = v.camera;
                d["image"] = to_numpy(v.image);
                d["pseudo_clean"] = v.pseudo_clean ? py::object(to_numpy(*v.pseudo_clean)) : py::none();
                d["pseudo_depth"] = v.pseudo_depth ? py::object(to_numpy(*v.pseudo_depth)) : py::none();
                d["mask"] = v.mask ? py::object(to_numpy(*v.mask)) : py::none();
                views.append(d);
            }
            py::dict out;
            out["views"] = views;
            out["background"] = ds.background;
            out["warnings"] = ds.warnings;
            return out;
        },
        py::arg("root"));
    m.def(
        "make_synthetic",
        [](const fs::path& out, int gaussians, int views, int width, int height, double reflective, std::uint64_t seed) {
            SyntheticSpec spec{gaussians, views, width, height, reflective, seed};
            const SyntheticScene s = generate_synthetic(spec, out);
            return py::make_tuple(s.ground_truth, s.cameras);
        },
        py::arg("out_dir"), py::arg("gaussians") = 50, py::arg("views") = 5, py::arg("width") = 64,
        py::arg("height") = 64, py::arg("reflective_fraction") = 0.3, py::arg("seed") = 0,
        "Writes a synthetic dataset and returns (ground_truth, cameras).");

    // ---- training
    m.def(
        "train",
        [](const fs::path& data, long long iterations, std::uint64_t seed, const std::vector<std::string>& disable,
           const std::map<std::string, double>& weights, std::function<void(long long, double)> on_step) {
            const TrainDataset ds = load_dataset(data);
            TrainConfig cfg;
            cfg.iterations = iterations;
            cfg.seed = seed;
            for (const auto& t : disable) cli::disable_loss(cfg.weights, t);
            for (const auto& [k, v] : weights) {
                std::ostringstream kv;
                kv.precision(17);
                kv << k << '=' << v;
                cli::apply_weight_override(cfg.weights, kv.str());
            }
            TrainCallbacks cb;
            if (on_step)
                cb.on_step = [&](const TrainState& s, const StepResult& r, std::size_t) {
                    py::gil_scoped_acquire acquire;
                    on_step(s.iteration, r.breakdown.total);
                };
            TrainState state;
            {
                py::gil_scoped_release release;
                state = train(ds, cfg, cb);
            }
            return py::make_tuple(state.scene, state.loss_history);
        },
        py::arg("data"), py::arg("iterations"), py::arg("seed") = 0, py::arg("disable") = std::vector<std::string>{},
        py::arg("weights") = std::map<std::string, double>{}, py::arg("on_step") = nullptr,
        "Trains from a dataset directory; returns (scene, loss_history).");

    m.def(
        "cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command line in-process; returns (exit_code, stdout, stderr).");
}
