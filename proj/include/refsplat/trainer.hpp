#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "refsplat/gaussian.hpp"
#include "refsplat/losses.hpp"
#include "refsplat/rasterizer.hpp"
#include "refsplat/scene_io.hpp"

namespace refsplat {

struct LearningRates {
    double position = 1.6e-4;
    double position_final = 1.6e-6;  ///< reached exponentially at the last iteration
    double sh = 2.5e-3;
    double opacity = 5e-2;
    double beta = 5e-2;
    double log_scale = 5e-3;
    double rotation = 1e-3;

    /// Rate for a group at `iteration` of a run of `iterations` steps. The
    /// trainer multiplies the position rate by the scene extent.
    double rate(ParamGroup g, long long iteration, long long iterations) const;
    bool operator==(const LearningRates&) const = default;
};

struct DensifyConfig {
    int interval = 100;
    int start = 500;
    double stop_fraction = 0.5;
    double grad_threshold = 2e-4;
    double clone_extent_fraction = 0.01;  ///< clone when the largest scale is at most this times the extent
    double prune_alpha = 0.005;
    std::size_t max_gaussians = 200000;
    bool operator==(const DensifyConfig&) const = default;
};

struct TrainConfig {
    long long iterations = 30000;
    LossWeights weights;
    int sh_degree_max = kMaxShDegree;
    int sh_warmup_interval = 1000;
    LearningRates lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
    bool densify_enabled = false;
    DensifyConfig densify;
    std::uint64_t seed = 0;
    DepthAlignment depth_alignment = DepthAlignment::min_max;
    RenderSettings render;
    /// Points drawn inside the dataset bounds when there is no initial cloud.
    int random_init_points = 2000;

    /// Throws ConfigError on non-positive rates, iterations < 0, degree > 5 and the like.
    void validate() const;
};

/// Active SH degree at an iteration: min(degree_max, iteration / warmup).
int active_sh_degree_at(long long iteration, const TrainConfig& config);

struct TrainState {
    GaussianSet scene;
    GaussianArrays moment1;
    GaussianArrays moment2;
    long long iteration = 0;
    int active_sh_degree = 0;
    std::vector<double> loss_history;
    double scene_extent = 1.0;

    // view schedule
    std::vector<std::size_t> view_order;
    std::size_t view_cursor = 0;
    std::uint64_t epoch = 0;

    // densification statistics
    std::vector<double> grad_accum;
    std::vector<int> grad_count;

    std::set<std::string> warned;
};

/// Thrown when a loss, gradient or parameter turns non-finite. Carries the
/// last scene whose parameters were all finite.
class NumericAbort : public std::runtime_error {
public:
    NumericAbort(const std::string& what, GaussianSet last_good, long long iteration, LossBreakdown breakdown)
        : std::runtime_error(what), last_good_(std::move(last_good)), iteration_(iteration), breakdown_(breakdown) {}
    const GaussianSet& last_good() const noexcept { return last_good_; }
    long long iteration() const noexcept { return iteration_; }
    const LossBreakdown& breakdown() const noexcept { return breakdown_; }

private:
    GaussianSet last_good_;
    long long iteration_;
    LossBreakdown breakdown_;
};

/// Builds the initial state: scene from the dataset's point cloud (or seeded
/// random points within its bounds), zero moments, extent from the cameras.
TrainState init_state(const TrainDataset& dataset, const TrainConfig& config);

/// Wraps an existing scene (for tests and resumption).
TrainState state_from_scene(GaussianSet scene, double scene_extent = 1.0);

struct StepResult {
    LossBreakdown breakdown;
    std::vector<std::string> warnings;
};

/// One iteration on one view: render, loss, backward, moment update,
/// quaternion renormalization, SH warm-up bookkeeping.
StepResult step(TrainState& state, const View& view, const Rgb& background, const TrainConfig& config);

/// Index of the next view in the seeded per-epoch permutation.
std::size_t next_view(TrainState& state, std::size_t n_views, std::uint64_t seed);

struct DensifyReport {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
};

/// Whether densification runs after `iteration` completed steps.
bool densify_due(long long iteration, const TrainConfig& config);

/// Clones small and splits large high-gradient Gaussians, then prunes
/// nearly transparent ones. No-op unless enabled and due.
DensifyReport densify_and_prune(TrainState& state, const TrainConfig& config);

struct TrainCallbacks {
    /// Called after every step with the view index used.
    std::function<void(const TrainState&, const StepResult&, std::size_t view)> on_step;
    std::function<void(const std::string&)> on_warning;
};

TrainState train(const TrainDataset& dataset, const TrainConfig& config, const TrainCallbacks& callbacks = {});

/// Continues training an existing state for the remaining iterations.
void train_from(TrainState& state, const TrainDataset& dataset, const TrainConfig& config,
                const TrainCallbacks& callbacks = {});

}  // namespace refsplat
