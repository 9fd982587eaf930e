#include <algorithm>
#include <cmath>
#include <random>

#include "refsplat/error.hpp"
#include "refsplat/trainer.hpp"

namespace refsplat {

double LearningRates::rate(ParamGroup g, long long iteration, long long iterations) const {
    switch (g) {
        case ParamGroup::position: {
            if (iterations <= 0) return position;
            const double t = std::clamp(static_cast<double>(iteration) / static_cast<double>(iterations), 0.0, 1.0);
            return std::exp((1.0 - t) * std::log(position) + t * std::log(position_final));
        }
        case ParamGroup::rotation: return rotation;
        case ParamGroup::log_scale: return log_scale;
        case ParamGroup::raw_alpha_trans:
        case ParamGroup::raw_alpha_ref: return opacity;
        case ParamGroup::raw_beta_ref: return beta;
        case ParamGroup::sh_trans:
        case ParamGroup::sh_ref: return sh;
    }
    return 0.0;
}

void TrainConfig::validate() const {
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (sh_degree_max < 0 || sh_degree_max > kMaxShDegree) throw ConfigError("sh_degree_max must lie in [0, 5]");
    if (sh_warmup_interval <= 0) throw ConfigError("sh_warmup_interval must be positive");
    for (double r : {lr.position, lr.position_final, lr.sh, lr.opacity, lr.beta, lr.log_scale, lr.rotation})
        if (!(r > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("moment decay rates must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (densify.interval <= 0) throw ConfigError("densify interval must be positive");
    try {
        weights.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

int active_sh_degree_at(long long iteration, const TrainConfig& config) {
    return static_cast<int>(std::min<long long>(config.sh_degree_max, iteration / config.sh_warmup_interval));
}

TrainState state_from_scene(GaussianSet scene, double scene_extent) {
    TrainState s;
    s.moment1 = GaussianArrays::zeros_like(scene);
    s.moment2 = GaussianArrays::zeros_like(scene);
    s.grad_accum.assign(scene.size(), 0.0);
    s.grad_count.assign(scene.size(), 0);
    s.scene = std::move(scene);
    s.scene_extent = scene_extent;
    return s;
}

TrainState init_state(const TrainDataset& dataset, const TrainConfig& config) {
    config.validate();
    if (dataset.views.empty()) throw EmptySceneError("dataset has no views");

    std::vector<Eigen::Vector3d> points = dataset.init_points;
    std::vector<Rgb> colors = dataset.init_colors;
    if (points.empty()) {
        std::mt19937_64 rng(config.seed);
        auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
        for (int i = 0; i < config.random_init_points; ++i) {
            Eigen::Vector3d p;
            for (int a = 0; a < 3; ++a)
                p[a] = dataset.bounds_min[a] + (dataset.bounds_max[a] - dataset.bounds_min[a]) * uniform();
            points.push_back(p);
            colors.push_back({uniform(), uniform(), uniform()});
        }
    }
    InitConfig ic;
    ic.sh_degree = config.sh_degree_max;

    // Extent: 1.1 x the largest camera distance from the mean camera center.
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& v : dataset.views) mean += v.camera.center();
    mean /= static_cast<double>(dataset.views.size());
    double radius = 0.0;
    for (const auto& v : dataset.views) radius = std::max(radius, (v.camera.center() - mean).norm());
    const double extent = radius > 0.0 ? 1.1 * radius : 1.0;

    TrainState s = state_from_scene(init_scene(points, colors, ic), extent);
    s.active_sh_degree = active_sh_degree_at(0, config);
    return s;
}

std::size_t next_view(TrainState& state, std::size_t n_views, std::uint64_t seed) {
    if (n_views == 0) throw EmptySceneError("no views to schedule");
    if (state.view_order.size() != n_views || state.view_cursor >= n_views) {
        if (state.view_order.size() == n_views) ++state.epoch;
        state.view_order.resize(n_views);
        for (std::size_t i = 0; i < n_views; ++i) state.view_order[i] = i;
        std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + state.epoch);
        for (std::size_t i = n_views; i-- > 1;) std::swap(state.view_order[i], state.view_order[rng() % (i + 1)]);
        state.view_cursor = 0;
    }
    return state.view_order[state.view_cursor++];
}

namespace {

bool all_finite(const GaussianArrays& a) {
    for (ParamGroup g : kAllParamGroups)
        for (double v : a.group(g))
            if (!std::isfinite(v)) return false;
    return true;
}

void adam_update(TrainState& state, const ParamGradients& grads, const TrainConfig& config) {
    const double t = static_cast<double>(state.iteration + 1);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (ParamGroup g : kAllParamGroups) {
        double lr = config.lr.rate(g, state.iteration, config.iterations);
        if (g == ParamGroup::position) lr *= state.scene_extent;
        auto& p = state.scene.group(g);
        auto& m = state.moment1.group(g);
        auto& v = state.moment2.group(g);
        const auto& d = grads.group(g);
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * d[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * d[j] * d[j];
            p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.epsilon);
        }
    }
}

}  // namespace

StepResult step(TrainState& state, const View& view, const Rgb& background, const TrainConfig& config) {
    StepResult result;
    state.active_sh_degree = std::min(active_sh_degree_at(state.iteration, config), state.scene.sh_degree);

    LossWeights w = config.weights;
    if (w.enable_trans && !view.pseudo_clean) {
        w.enable_trans = false;
        if (state.warned.insert(view.name + "/clean").second)
            result.warnings.push_back("view '" + view.name + "' has no pseudo-clean image; l_I_trans disabled for it");
    }
    if (w.enable_depth && !view.pseudo_depth) {
        w.enable_depth = false;
        if (state.warned.insert(view.name + "/depth").second)
            result.warnings.push_back("view '" + view.name + "' has no pseudo-depth map; l_depth disabled for it");
    }

    RenderOutputs out;
    try {
        out = render_forward(state.scene, view.camera, state.active_sh_degree, background, config.render);
    } catch (const NumericError& e) {
        throw NumericAbort(std::string("render failed at iteration ") + std::to_string(state.iteration) + ": " +
                               e.what(),
                           state.scene, state.iteration, LossBreakdown{});
    }
    ViewTargets targets;
    targets.image = &view.image;
    targets.pseudo_clean = view.pseudo_clean ? &*view.pseudo_clean : nullptr;
    targets.pseudo_depth = view.pseudo_depth ? &*view.pseudo_depth : nullptr;
    const int it = static_cast<int>(std::min<long long>(state.iteration, std::numeric_limits<int>::max()));
    Objective obj = evaluate_objective(out, targets, w, it, config.depth_alignment);
    result.breakdown = obj.breakdown;
    for (auto& msg : obj.warnings)
        if (state.warned.insert(view.name + "/" + msg).second) result.warnings.push_back("view '" + view.name + "': " + msg);

    if (!std::isfinite(obj.breakdown.total))
        throw NumericAbort("non-finite loss at iteration " + std::to_string(state.iteration), state.scene,
                           state.iteration, obj.breakdown);

    BackwardDiagnostics diag;
    const ParamGradients grads = render_backward(state.scene, view.camera, out, obj.grads, &diag);
    if (!all_finite(grads))
        throw NumericAbort("non-finite gradient at iteration " + std::to_string(state.iteration), state.scene,
                           state.iteration, obj.breakdown);

    GaussianSet before = state.scene;
    adam_update(state, grads, config);
    state.scene.normalize_rotations();
    if (!state.scene.all_finite())
        throw NumericAbort("non-finite parameter after iteration " + std::to_string(state.iteration),
                           std::move(before), state.iteration, obj.breakdown);

    if (config.densify_enabled) {
        state.grad_accum.resize(state.scene.size(), 0.0);
        state.grad_count.resize(state.scene.size(), 0);
        for (std::size_t i = 0; i < state.scene.size(); ++i)
            if (diag.visible[i]) {
                state.grad_accum[i] += diag.screen_grad_norm[i];
                ++state.grad_count[i];
            }
    }

    ++state.iteration;
    state.active_sh_degree = std::min(active_sh_degree_at(state.iteration, config), state.scene.sh_degree);
    state.loss_history.push_back(obj.breakdown.total);
    return result;
}

void train_from(TrainState& state, const TrainDataset& dataset, const TrainConfig& config,
                const TrainCallbacks& callbacks) {
    config.validate();
    if (dataset.views.empty()) throw EmptySceneError("dataset has no views");
    while (state.iteration < config.iterations) {
        const std::size_t v = next_view(state, dataset.views.size(), config.seed);
        StepResult r = step(state, dataset.views[v], dataset.background, config);
        if (callbacks.on_warning)
            for (const auto& w : r.warnings) callbacks.on_warning(w);
        if (config.densify_enabled && densify_due(state.iteration, config)) densify_and_prune(state, config);
        if (callbacks.on_step) callbacks.on_step(state, r, v);
    }
}

TrainState train(const TrainDataset& dataset, const TrainConfig& config, const TrainCallbacks& callbacks) {
    TrainState state = init_state(dataset, config);
    train_from(state, dataset, config, callbacks);
    return state;
}

}  // namespace refsplat
