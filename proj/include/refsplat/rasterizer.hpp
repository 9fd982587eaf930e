#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "refsplat/gaussian.hpp"
#include "refsplat/image.hpp"

namespace refsplat {

/// Per-pixel blending rules. Defaults are the production settings; tests
/// relax them (no clamp, no skip, no termination) where they need a smooth
/// or exhaustive evaluation.
struct RenderSettings {
    double max_weight = 0.99;          ///< upper clamp on the Gaussian falloff g
    double min_weight = 1.0 / 255.0;   ///< splats with g below this are skipped
    double stop_transmittance = 1e-4; ///< terminate once the transmitted chain would drop below; 0 disables
    double footprint_sigma = 3.0;      ///< screen-space cutoff, in standard deviations of the major axis
    double dilation = kLowPassDilation;
    int tile_size = 16;
    double depth_min_coverage = 1e-4;

    bool operator==(const RenderSettings&) const = default;
};

/// Screen-space state kept by render_forward for the matching backward pass.
struct RenderTrace {
    int width = 0, height = 0;
    int tiles_x = 0, tiles_y = 0;
    int active_sh_degree = 0;
    Rgb background{};
    RenderSettings settings;
    std::size_t scene_size = 0;
    std::vector<Splat2D> splats;                 ///< visible splats, sorted front to back
    std::vector<std::size_t> splat_of_gaussian;  ///< index into splats, or npos when culled
    std::vector<Rgb> color_trans;                ///< clamped SH colors, per splat
    std::vector<Rgb> color_ref;
    std::vector<std::vector<std::uint32_t>> tile_lists;  ///< per tile, indices into splats in depth order
    std::vector<std::uint32_t> n_contrib;                ///< per pixel, entries of its tile list consumed
    std::size_t culled = 0;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// All dual-branch buffers of one render.
struct RenderOutputs {
    Image image;        ///< fused, clamped to [0, 1]
    Image image_raw;    ///< fused, before the clamp
    Image color_trans;  ///< composited transmitted color (with background)
    Image color_ref;    ///< composited reflected color
    Image ref_map;      ///< reflection map, 1 channel
    Image trans_map;    ///< 1 - ref_map
    Image image_trans;  ///< trans_map * color_trans
    Image image_ref;    ///< ref_map * color_ref
    Image depth;        ///< coverage-normalized expected depth, 0 where uncovered
    Image coverage;     ///< 1 - residual transmittance of the transmitted chain
    RenderTrace trace;
};

/// Upstream dL/d(buffer). Empty images are treated as zero.
struct BufferGradients {
    Image image;
    Image image_trans;
    Image image_ref;
    Image color_trans;
    Image color_ref;
    Image ref_map;
    Image depth;
    Image coverage;
};

/// Per-Gaussian side products of a backward pass.
struct BackwardDiagnostics {
    std::vector<double> screen_grad_norm;  ///< |dL/d(mean2d)| in normalized device units
    std::vector<bool> visible;
};

struct EditSpec {
    Image mask;          ///< 1 channel, values in [0, 1]
    double scale = 1.0;  ///< >= 0
};

RenderOutputs render_forward(const GaussianSet& scene, const Camera& cam, int active_sh_degree, const Rgb& background,
                             const RenderSettings& settings = {});

/// Same buffers as render_forward; only the fused image uses the per-pixel
/// reflection scale 1 + (scale - 1) * mask.
RenderOutputs render_edited(const GaussianSet& scene, const Camera& cam, int active_sh_degree, const Rgb& background,
                            const EditSpec& edit, const RenderSettings& settings = {});

ParamGradients render_backward(const GaussianSet& scene, const Camera& cam, const RenderOutputs& outputs,
                               const BufferGradients& upstream, BackwardDiagnostics* diagnostics = nullptr);

/// One splat as seen by a single pixel.
struct PixelSplat {
    double weight = 0.0;  ///< Gaussian falloff g at the pixel, already clamped
    double alpha_trans = 0.0;
    double alpha_ref = 0.0;
    double beta_ref = 0.0;
    Rgb color_trans{};
    Rgb color_ref{};
    double depth = 0.0;
};

struct PixelResult {
    Rgb image{};  ///< clamped fusion
    Rgb image_raw{};
    Rgb color_trans{};
    Rgb color_ref{};
    double ref_map = 0.0;
    double depth = 0.0;
    double coverage = 0.0;
};

/// Scalar, untiled compositor for one pixel over an already ordered splat
/// list, evaluated in long double with no early termination. Serves as the
/// independent oracle for render_forward.
PixelResult reference_composite(std::span<const PixelSplat> ordered, const Rgb& background,
                                double depth_min_coverage = 1e-4);

}  // namespace refsplat
