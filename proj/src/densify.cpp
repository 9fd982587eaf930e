#include <cmath>
#include <random>

#include "refsplat/trainer.hpp"

namespace refsplat {

namespace {

void append_zero(GaussianArrays& dst) {
    for (ParamGroup g : kAllParamGroups) {
        auto& to = dst.group(g);
        to.insert(to.end(), static_cast<std::size_t>(dst.group_width(g)), 0.0);
    }
}

void filter_rows(GaussianArrays& a, const std::vector<bool>& keep) {
    for (ParamGroup g : kAllParamGroups) {
        const int w = a.group_width(g);
        auto& v = a.group(g);
        std::size_t out = 0;
        for (std::size_t i = 0; i < keep.size(); ++i)
            if (keep[i]) {
                for (int k = 0; k < w; ++k) v[out * w + k] = v[i * w + k];
                ++out;
            }
        v.resize(out * w);
    }
}

}  // namespace

bool densify_due(long long iteration, const TrainConfig& config) {
    const DensifyConfig& d = config.densify;
    return iteration >= d.start && iteration % d.interval == 0 &&
           static_cast<double>(iteration) <= d.stop_fraction * static_cast<double>(config.iterations);
}

DensifyReport densify_and_prune(TrainState& state, const TrainConfig& config) {
    DensifyReport report;
    if (!config.densify_enabled || !densify_due(state.iteration, config)) return report;

    GaussianSet& scene = state.scene;
    const DensifyConfig& d = config.densify;
    const std::size_t n = scene.size();
    state.grad_accum.resize(n, 0.0);
    state.grad_count.resize(n, 0);

    std::mt19937_64 rng(config.seed ^ (static_cast<std::uint64_t>(state.iteration) * 0xbf58476d1ce4e5b9ULL));
    auto gauss = [&] {
        const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
        const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    };

    std::vector<bool> keep(n, true);
    for (std::size_t i = 0; i < n; ++i) {
        if (scene.size() >= d.max_gaussians) break;
        if (state.grad_count[i] == 0) continue;
        const double grad = state.grad_accum[i] / state.grad_count[i];
        if (!(grad > d.grad_threshold)) continue;
        const Eigen::Vector3d s = scene.scale(i);
        if (s.maxCoeff() <= d.clone_extent_fraction * state.scene_extent) {
            scene.append_copy(scene, i);
            append_zero(state.moment1);
            append_zero(state.moment2);
            ++report.cloned;
        } else {
            const Eigen::Matrix3d r = rotation_from_quaternion(scene.rotation(i));
            for (int child = 0; child < 2 && scene.size() < d.max_gaussians; ++child) {
                const Eigen::Vector3d offset = r * s.cwiseProduct(Eigen::Vector3d(gauss(), gauss(), gauss()));
                const std::size_t c = scene.size();
                scene.append_copy(scene, i);
                for (int a = 0; a < 3; ++a) {
                    scene.positions[3 * c + a] += offset[a];
                    scene.log_scales[3 * c + a] -= std::log(1.6);
                }
                append_zero(state.moment1);
                append_zero(state.moment2);
            }
            keep[i] = false;
            ++report.split;
        }
    }
    keep.resize(scene.size(), true);
    for (std::size_t i = 0; i < scene.size(); ++i)
        if (keep[i] && scene.alpha_trans(i) < d.prune_alpha) {
            keep[i] = false;
            ++report.pruned;
        }
    scene.filter(keep);
    filter_rows(state.moment1, keep);
    filter_rows(state.moment2, keep);
    state.grad_accum.assign(scene.size(), 0.0);
    state.grad_count.assign(scene.size(), 0);
    return report;
}

}  // namespace refsplat
