#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "refsplat/error.hpp"
#include "refsplat/losses.hpp"
#include "refsplat/rasterizer.hpp"
#include "refsplat/scene_io.hpp"
#include "refsplat/trainer.hpp"

namespace refsplat::cli {

using nlohmann::json;

namespace {

const char* alignment_name(DepthAlignment a) { return a == DepthAlignment::min_max ? "min-max" : "scale-shift"; }

DepthAlignment parse_alignment(const std::string& s) {
    if (s == "min-max") return DepthAlignment::min_max;
    if (s == "scale-shift") return DepthAlignment::scale_shift;
    throw ConfigError("unknown depth alignment '" + s + "' (expected min-max or scale-shift)");
}

std::string transforms_for(const std::string& split) {
    if (split == "train") return "transforms.json";
    if (split == "test") return "transforms_test.json";
    throw ConfigError("unknown split '" + split + "'");
}

TrainDataset load_data(const std::string& dir, const std::string& split, std::ostream& err) {
    if (!fs::exists(dir)) throw LoadError("data directory '" + dir + "' does not exist");
    TrainDataset ds = load_dataset(dir, transforms_for(split));
    for (const auto& w : ds.warnings) err << "warning: " << w << '\n';
    return ds;
}

GaussianSet load_ckpt(const std::string& path) {
    if (!fs::exists(path)) throw LoadError("checkpoint '" + path + "' does not exist");
    return load_checkpoint(path);
}

std::vector<std::size_t> select_views(const TrainDataset& ds, const std::string& spec) {
    std::vector<std::size_t> picked;
    if (spec == "all") {
        for (std::size_t i = 0; i < ds.views.size(); ++i) picked.push_back(i);
        return picked;
    }
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t idx = ds.views.size();
        for (std::size_t i = 0; i < ds.views.size(); ++i)
            if (ds.views[i].name == item) idx = i;
        if (idx == ds.views.size()) {
            const bool numeric = std::all_of(item.begin(), item.end(), [](unsigned char c) { return std::isdigit(c); });
            if (numeric) idx = std::stoul(item);
        }
        if (idx >= ds.views.size()) throw ConfigError("no view '" + item + "' in the dataset");
        if (std::find(picked.begin(), picked.end(), idx) == picked.end()) picked.push_back(idx);
    }
    if (picked.empty()) throw ConfigError("--views selects nothing");
    return picked;
}

json number_or_inf(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

json breakdown_json(const LossBreakdown& b) {
    return {{"total", b.total}, {"l_rgb", b.l_rgb},     {"l_I", b.l_I},     {"l_I_trans", b.l_I_trans},
            {"l_init", b.l_init}, {"l_depth", b.l_depth}, {"l_bi", b.l_bi}, {"l_ref", b.l_ref},
            {"depth_valid", b.depth_valid}};
}

std::string ckpt_name(long long it) {
    std::ostringstream s;
    s << "ckpt_" << std::setw(6) << std::setfill('0') << it << ".ply";
    return s.str();
}

struct TrainArgs {
    std::string data, out, config_file, depth_align = "min-max";
    long long iters = 30000;
    std::uint64_t seed = 0;
    std::vector<std::string> disabled, weights;
    bool densify = false;
    int sh_degree = kMaxShDegree;
    int log_every = 100;
    int checkpoint_every = 1000;
};

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
    TrainConfig cfg;
    if (!a.config_file.empty()) {
        std::ifstream in(a.config_file);
        if (!in) throw LoadError("cannot read config '" + a.config_file + "'");
        try {
            config_from_json(json::parse(in), cfg);
        } catch (const json::exception& e) {
            throw ConfigError("bad config '" + a.config_file + "': " + e.what());
        }
    }
    if (a.config_file.empty() || sub.count("--iters")) cfg.iterations = a.iters;
    if (a.config_file.empty() || sub.count("--seed")) cfg.seed = a.seed;
    if (a.config_file.empty() || sub.count("--sh-degree")) cfg.sh_degree_max = a.sh_degree;
    if (a.config_file.empty() || sub.count("--depth-align")) cfg.depth_alignment = parse_alignment(a.depth_align);
    if (sub.count("--densify")) cfg.densify_enabled = a.densify;
    for (const auto& kv : a.weights) apply_weight_override(cfg.weights, kv);
    for (const auto& t : a.disabled) disable_loss(cfg.weights, t);
    cfg.validate();

    const TrainDataset ds = load_data(a.data, "train", err);
    std::optional<View> held_out;
    if (fs::exists(fs::path(a.data) / "transforms_test.json")) {
        TrainDataset test = load_dataset(a.data, "transforms_test.json");
        if (!test.views.empty()) held_out = test.views.front();
    }
    const View& probe = held_out ? *held_out : ds.views.front();

    const fs::path out_dir = a.out;
    fs::create_directories(out_dir);
    {
        json effective = config_to_json(cfg);
        effective["data"] = a.data;
        std::ofstream(out_dir / "config.json") << effective.dump(2) << '\n';
    }
    std::ofstream metrics(out_dir / "metrics.jsonl");

    TrainState state = init_state(ds, cfg);
    TrainCallbacks cb;
    cb.on_warning = [&](const std::string& w) { err << "warning: " << w << '\n'; };
    cb.on_step = [&](const TrainState& s, const StepResult& r, std::size_t v) {
        json rec = {{"iteration", s.iteration},
                    {"view", ds.views[v].name},
                    {"sh_degree", s.active_sh_degree},
                    {"gaussians", s.scene.size()},
                    {"loss", breakdown_json(r.breakdown)}};
        const bool log_now = a.log_every > 0 && (s.iteration % a.log_every == 0 || s.iteration == cfg.iterations);
        if (log_now) {
            const RenderOutputs ro = render_forward(s.scene, probe.camera, s.active_sh_degree, ds.background, cfg.render);
            const double p = psnr(probe.image, ro.image);
            rec["psnr"] = number_or_inf(p);
            rec["psnr_view"] = probe.name;
            out << "iter " << s.iteration << "  loss " << r.breakdown.total << "  psnr(" << probe.name << ") " << p
                << "  gaussians " << s.scene.size() << '\n';
        }
        metrics << rec.dump() << '\n';
        if (a.checkpoint_every > 0 && s.iteration % a.checkpoint_every == 0)
            save_checkpoint(out_dir / ckpt_name(s.iteration), s.scene, s.iteration);
    };

    try {
        train_from(state, ds, cfg, cb);
    } catch (const NumericAbort& e) {
        save_checkpoint(out_dir / "last_good.ply", e.last_good(), e.iteration());
        json diag = {{"error", e.what()}, {"iteration", e.iteration()}, {"loss", breakdown_json(e.breakdown())}};
        for (auto& [k, v] : diag["loss"].items())
            if (v.is_number_float() && !std::isfinite(v.get<double>())) v = std::to_string(v.get<double>());
        std::ofstream(out_dir / "abort.json") << diag.dump(2) << '\n';
        err << "error: " << e.what() << "; last good state saved to " << (out_dir / "last_good.ply").string() << '\n';
        return kExitNumeric;
    }
    save_checkpoint(out_dir / "final.ply", state.scene, state.iteration);
    out << "wrote " << (out_dir / "final.ply").string() << '\n';
    return kExitOk;
}

struct RenderArgs {
    std::string ckpt, data, out, views = "all", split = "train", mask, renders;
    double scale = 1.0;
    bool json_out = false;
};

int cmd_render(const RenderArgs& a, std::ostream& out, std::ostream& err) {
    const GaussianSet scene = load_ckpt(a.ckpt);
    const TrainDataset ds = load_data(a.data, a.split, err);
    for (std::size_t i : select_views(ds, a.views)) {
        const View& v = ds.views[i];
        const RenderOutputs r = render_forward(scene, v.camera, scene.sh_degree, ds.background);
        write_png(fs::path(a.out) / (v.name + ".png"), r.image);
    }
    out << "rendered to " << a.out << '\n';
    return kExitOk;
}

int cmd_decompose(const RenderArgs& a, std::ostream& out, std::ostream& err) {
    const GaussianSet scene = load_ckpt(a.ckpt);
    const TrainDataset ds = load_data(a.data, a.split, err);
    const fs::path dir = a.out;
    for (std::size_t i : select_views(ds, a.views)) {
        const View& v = ds.views[i];
        const RenderOutputs r = render_forward(scene, v.camera, scene.sh_degree, ds.background);
        write_png(dir / (v.name + "_image.png"), r.image);
        write_png(dir / (v.name + "_trans.png"), r.image_trans);
        write_png(dir / (v.name + "_ref.png"), r.image_ref);
        write_png(dir / (v.name + "_refmap.png"), r.ref_map);
        write_pfm(dir / (v.name + "_depth.pfm"), r.depth);
    }
    out << "decomposed into " << a.out << '\n';
    return kExitOk;
}

int cmd_edit(const RenderArgs& a, std::ostream& out, std::ostream& err) {
    if (!(a.scale >= 0.0) || !std::isfinite(a.scale)) throw ConfigError("--scale must be a finite value >= 0");
    if (!fs::exists(a.mask)) throw LoadError("mask '" + a.mask + "' does not exist");
    const GaussianSet scene = load_ckpt(a.ckpt);
    const TrainDataset ds = load_data(a.data, a.split, err);
    for (std::size_t i : select_views(ds, a.views)) {
        const View& v = ds.views[i];
        EditSpec edit;
        bool resized = false;
        edit.mask = load_mask(a.mask, v.camera.width, v.camera.height, &resized);
        if (resized) err << "warning: mask resized to " << v.camera.width << "x" << v.camera.height << '\n';
        edit.scale = a.scale;
        const RenderOutputs r = render_edited(scene, v.camera, scene.sh_degree, ds.background, edit);
        write_png(fs::path(a.out) / (v.name + ".png"), r.image);
    }
    out << "edited renders written to " << a.out << '\n';
    return kExitOk;
}

int cmd_eval(const RenderArgs& a, std::ostream& out, std::ostream& err) {
    if (a.ckpt.empty() == a.renders.empty()) throw ConfigError("eval needs exactly one of --ckpt or --renders");
    const TrainDataset ds = load_data(a.data, a.split, err);
    std::optional<GaussianSet> scene;
    if (!a.ckpt.empty()) scene = load_ckpt(a.ckpt);

    json views = json::array();
    double sum_psnr = 0.0, sum_ssim = 0.0;
    for (std::size_t i : select_views(ds, a.views)) {
        const View& v = ds.views[i];
        Image pred;
        if (scene) {
            pred = quantize_image(render_forward(*scene, v.camera, scene->sh_degree, ds.background).image);
        } else {
            const fs::path p = fs::path(a.renders) / (v.name + ".png");
            if (!fs::exists(p)) throw LoadError("missing render '" + p.string() + "'");
            pred = read_png(p, &ds.background);
        }
        if (!pred.same_shape(v.image))
            throw ConfigError("view '" + v.name + "': render is " + std::to_string(pred.width) + "x" +
                              std::to_string(pred.height) + " but the image is " + std::to_string(v.image.width) +
                              "x" + std::to_string(v.image.height));
        const double p = psnr(v.image, pred);
        const double s = ssim_metric(v.image, pred);
        sum_psnr += p;
        sum_ssim += s;
        views.push_back({{"name", v.name}, {"psnr", number_or_inf(p)}, {"ssim", s}});
    }
    const double n = static_cast<double>(views.size());
    json report = {{"split", a.split},
                   {"views", views},
                   {"mean", {{"psnr", number_or_inf(sum_psnr / n)}, {"ssim", sum_ssim / n}}},
                   {"lpips", "unavailable"}};
    if (a.json_out) {
        out << report.dump(2) << '\n';
    } else {
        for (const auto& v : views)
            out << v["name"].get<std::string>() << "  psnr " << v["psnr"].dump() << "  ssim " << v["ssim"].dump() << '\n';
        out << "mean  psnr " << report["mean"]["psnr"].dump() << "  ssim " << report["mean"]["ssim"].dump()
            << "  lpips unavailable\n";
    }
    return kExitOk;
}

struct SyntheticArgs {
    std::string out, res = "64x64";
    int gaussians = 50, views = 5;
    double reflective = 0.3;
    std::uint64_t seed = 0;
};

int cmd_make_synthetic(const SyntheticArgs& a, std::ostream& out) {
    SyntheticSpec spec;
    spec.n_gaussians = a.gaussians;
    spec.n_views = a.views;
    spec.reflective_fraction = a.reflective;
    spec.seed = a.seed;
    const auto x = a.res.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument("no x");
        std::size_t used = 0;
        spec.width = std::stoi(a.res.substr(0, x), &used);
        if (used != x) throw std::invalid_argument("trailing");
        spec.height = std::stoi(a.res.substr(x + 1), &used);
        if (used != a.res.size() - x - 1) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
        throw ConfigError("--res must look like WxH, got '" + a.res + "'");
    }
    generate_synthetic(spec, a.out);
    out << "synthetic dataset written to " << a.out << '\n';
    return kExitOk;
}

}  // namespace

json config_to_json(const TrainConfig& c) {
    const LossWeights& w = c.weights;
    return {
        {"iterations", c.iterations},
        {"seed", c.seed},
        {"sh_degree_max", c.sh_degree_max},
        {"sh_warmup_interval", c.sh_warmup_interval},
        {"densify_enabled", c.densify_enabled},
        {"depth_alignment", alignment_name(c.depth_alignment)},
        {"random_init_points", c.random_init_points},
        {"weights",
         {{"lambda_photo", w.lambda_photo}, {"s_trans", w.s_trans}, {"lambda_init", w.lambda_init},
          {"lambda_depth", w.lambda_depth}, {"lambda_bi", w.lambda_bi}, {"lambda_ref", w.lambda_ref},
          {"gamma", w.gamma}, {"init_cutoff", w.init_cutoff}, {"enable_trans", w.enable_trans},
          {"enable_init", w.enable_init}, {"enable_depth", w.enable_depth}, {"enable_bi", w.enable_bi},
          {"enable_ref", w.enable_ref}}},
        {"lr",
         {{"position", c.lr.position}, {"position_final", c.lr.position_final}, {"sh", c.lr.sh},
          {"opacity", c.lr.opacity}, {"beta", c.lr.beta}, {"log_scale", c.lr.log_scale},
          {"rotation", c.lr.rotation}}},
        {"adam", {{"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}}},
        {"densify",
         {{"interval", c.densify.interval}, {"start", c.densify.start}, {"stop_fraction", c.densify.stop_fraction},
          {"grad_threshold", c.densify.grad_threshold}, {"clone_extent_fraction", c.densify.clone_extent_fraction},
          {"prune_alpha", c.densify.prune_alpha}, {"max_gaussians", c.densify.max_gaussians}}},
        {"render",
         {{"max_weight", c.render.max_weight}, {"min_weight", c.render.min_weight},
          {"stop_transmittance", c.render.stop_transmittance}, {"footprint_sigma", c.render.footprint_sigma},
          {"dilation", c.render.dilation}, {"tile_size", c.render.tile_size},
          {"depth_min_coverage", c.render.depth_min_coverage}}},
    };
}

void config_from_json(const json& j, TrainConfig& c) {
    auto get = [](const json& o, const char* k, auto& field) {
        if (o.contains(k)) field = o.at(k).get<std::remove_reference_t<decltype(field)>>();
    };
    get(j, "iterations", c.iterations);
    get(j, "seed", c.seed);
    get(j, "sh_degree_max", c.sh_degree_max);
    get(j, "sh_warmup_interval", c.sh_warmup_interval);
    get(j, "densify_enabled", c.densify_enabled);
    get(j, "random_init_points", c.random_init_points);
    if (j.contains("depth_alignment")) c.depth_alignment = parse_alignment(j.at("depth_alignment").get<std::string>());
    if (j.contains("weights")) {
        const json& o = j.at("weights");
        LossWeights& w = c.weights;
        get(o, "lambda_photo", w.lambda_photo);
        get(o, "s_trans", w.s_trans);
        get(o, "lambda_init", w.lambda_init);
        get(o, "lambda_depth", w.lambda_depth);
        get(o, "lambda_bi", w.lambda_bi);
        get(o, "lambda_ref", w.lambda_ref);
        get(o, "gamma", w.gamma);
        get(o, "init_cutoff", w.init_cutoff);
        get(o, "enable_trans", w.enable_trans);
        get(o, "enable_init", w.enable_init);
        get(o, "enable_depth", w.enable_depth);
        get(o, "enable_bi", w.enable_bi);
        get(o, "enable_ref", w.enable_ref);
    }
    if (j.contains("lr")) {
        const json& o = j.at("lr");
        get(o, "position", c.lr.position);
        get(o, "position_final", c.lr.position_final);
        get(o, "sh", c.lr.sh);
        get(o, "opacity", c.lr.opacity);
        get(o, "beta", c.lr.beta);
        get(o, "log_scale", c.lr.log_scale);
        get(o, "rotation", c.lr.rotation);
    }
    if (j.contains("adam")) {
        const json& o = j.at("adam");
        get(o, "beta1", c.beta1);
        get(o, "beta2", c.beta2);
        get(o, "epsilon", c.epsilon);
    }
    if (j.contains("densify")) {
        const json& o = j.at("densify");
        get(o, "interval", c.densify.interval);
        get(o, "start", c.densify.start);
        get(o, "stop_fraction", c.densify.stop_fraction);
        get(o, "grad_threshold", c.densify.grad_threshold);
        get(o, "clone_extent_fraction", c.densify.clone_extent_fraction);
        get(o, "prune_alpha", c.densify.prune_alpha);
        get(o, "max_gaussians", c.densify.max_gaussians);
    }
    if (j.contains("render")) {
        const json& o = j.at("render");
        get(o, "max_weight", c.render.max_weight);
        get(o, "min_weight", c.render.min_weight);
        get(o, "stop_transmittance", c.render.stop_transmittance);
        get(o, "footprint_sigma", c.render.footprint_sigma);
        get(o, "dilation", c.render.dilation);
        get(o, "tile_size", c.render.tile_size);
        get(o, "depth_min_coverage", c.render.depth_min_coverage);
    }
}

void apply_weight_override(LossWeights& w, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--weights expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), val = assignment.substr(eq + 1);
    double v = 0.0;
    try {
        std::size_t used = 0;
        v = std::stod(val, &used);
        if (used != val.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
        throw ConfigError("--weights " + key + ": '" + val + "' is not a number");
    }
    if (key == "lambda_photo" || key == "lambda") w.lambda_photo = v;
    else if (key == "s_trans" || key == "S") w.s_trans = v;
    else if (key == "lambda_init") w.lambda_init = v;
    else if (key == "lambda_depth") w.lambda_depth = v;
    else if (key == "lambda_bi") w.lambda_bi = v;
    else if (key == "lambda_ref") w.lambda_ref = v;
    else if (key == "gamma") w.gamma = v;
    else if (key == "init_cutoff") {
        if (v != std::floor(v)) throw ConfigError("--weights init_cutoff must be an integer");
        w.init_cutoff = static_cast<int>(v);
    } else {
        throw ConfigError("unknown weight '" + key + "'");
    }
}

void disable_loss(LossWeights& w, const std::string& term) {
    if (term == "init") w.enable_init = false;
    else if (term == "depth") w.enable_depth = false;
    else if (term == "bi") w.enable_bi = false;
    else if (term == "ref") w.enable_ref = false;
    else if (term == "trans") w.enable_trans = false;
    else throw ConfigError("unknown loss term '" + term + "'");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dual-branch Gaussian splatting for scenes with reflections", "refsplat"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Optimize a scene from a dataset directory");
    train->add_option("--data", ta.data, "Dataset directory (transforms.json)")->required();
    train->add_option("--out", ta.out, "Output directory")->required();
    train->add_option("--iters", ta.iters, "Training iterations")->check(CLI::NonNegativeNumber);
    train->add_option("--seed", ta.seed, "Random seed");
    train->add_option("--disable-loss", ta.disabled, "Loss terms to switch off")
        ->check(CLI::IsMember({"init", "depth", "bi", "ref", "trans"}))
        ->default_str("none");
    train->add_flag("--densify", ta.densify, "Enable clone/split/prune");
    train->add_option("--sh-degree", ta.sh_degree, "Maximum SH degree")->check(CLI::Range(0, kMaxShDegree));
    train->add_option("--weights", ta.weights,
                      "Loss weight overrides key=value (lambda_photo, s_trans, lambda_init, lambda_depth, "
                      "lambda_bi, lambda_ref, gamma, init_cutoff)")
        ->default_str("none");
    train->add_option("--depth-align", ta.depth_align, "Depth normalization")
        ->check(CLI::IsMember({"min-max", "scale-shift"}));
    train->add_option("--config", ta.config_file, "Effective-config JSON from an earlier run")->default_str("none");
    train->add_option("--log-every", ta.log_every, "Progress/PSNR interval")->check(CLI::NonNegativeNumber);
    train->add_option("--checkpoint-every", ta.checkpoint_every, "Checkpoint interval")
        ->check(CLI::NonNegativeNumber);

    RenderArgs ra;
    auto add_common = [&](CLI::App* sub, bool need_ckpt) {
        auto* ck = sub->add_option("--ckpt", ra.ckpt, "Checkpoint file");
        if (need_ckpt) ck->required();
        sub->add_option("--data", ra.data, "Dataset directory")->required();
        sub->add_option("--views", ra.views, "all, or comma-separated indices or names");
        sub->add_option("--split", ra.split, "Dataset split")->check(CLI::IsMember({"train", "test"}));
    };
    auto* render = app.add_subcommand("render", "Render the fused image per view");
    add_common(render, true);
    render->add_option("--out", ra.out, "Output directory")->required();
    auto* decompose = app.add_subcommand("decompose", "Write fused, transmitted, reflected, map and depth buffers");
    add_common(decompose, true);
    decompose->add_option("--out", ra.out, "Output directory")->required();
    auto* edit = app.add_subcommand("edit", "Scale the reflected branch inside a mask");
    add_common(edit, true);
    edit->add_option("--out", ra.out, "Output directory")->required();
    edit->add_option("--mask", ra.mask, "8-bit mask PNG")->required();
    edit->add_option("--scale", ra.scale, "Reflection scale (>= 0)")->required();
    auto* eval = app.add_subcommand("eval", "PSNR and SSIM against the dataset images");
    add_common(eval, false);
    eval->add_option("--renders", ra.renders, "Directory of <view>.png renders to score instead of a checkpoint");
    eval->add_flag("--json", ra.json_out, "Print JSON instead of text");

    SyntheticArgs sa;
    auto* synth = app.add_subcommand("make-synthetic", "Generate a synthetic dataset with ground truth");
    synth->add_option("--out", sa.out, "Output directory")->required();
    synth->add_option("--gaussians", sa.gaussians, "Gaussian count")->check(CLI::PositiveNumber);
    synth->add_option("--views", sa.views, "View count")->check(CLI::PositiveNumber);
    synth->add_option("--res", sa.res, "Resolution WxH");
    synth->add_option("--reflective-frac", sa.reflective, "Fraction of reflective Gaussians")
        ->check(CLI::Range(0.0, 1.0));
    synth->add_option("--seed", sa.seed, "Random seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train) return cmd_train(ta, *train, out, err);
        if (*render) return cmd_render(ra, out, err);
        if (*decompose) return cmd_decompose(ra, out, err);
        if (*edit) return cmd_edit(ra, out, err);
        if (*eval) return cmd_eval(ra, out, err);
        if (*synth) return cmd_make_synthetic(sa, out);
    } catch (const NumericAbort& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace refsplat::cli
