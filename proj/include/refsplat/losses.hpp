#pragma once

#include <limits>
#include <string>
#include <vector>

#include "refsplat/image.hpp"
#include "refsplat/rasterizer.hpp"

namespace refsplat {

/// Loss coefficients and per-term switches. Defaults: lambda 0.8, S 10,
/// lambda_init 0.01, lambda_depth 30, lambda_bi = lambda_ref = 0.001.
struct LossWeights {
    double lambda_photo = 0.8;
    double s_trans = 10.0;
    double lambda_init = 0.01;
    double lambda_depth = 30.0;
    double lambda_bi = 0.001;
    double lambda_ref = 0.001;
    double gamma = 0.1;
    int init_cutoff = 1000;

    bool enable_trans = true;  ///< pseudo-clean supervision of the transmitted image
    bool enable_init = true;
    bool enable_depth = true;
    bool enable_bi = true;
    bool enable_ref = true;

    /// Throws DomainError on lambda outside [0,1], negative weights or gamma <= 0.
    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

/// Raw per-term values of one evaluation plus the weighted total.
/// Disabled or unavailable terms record 0.
struct LossBreakdown {
    double total = 0.0;
    double l_rgb = 0.0;
    double l_I = 0.0;
    double l_I_trans = 0.0;
    double l_init = 0.0;
    double l_depth = 0.0;
    double l_bi = 0.0;
    double l_ref = 0.0;
    bool depth_valid = true;  ///< false when l_depth had no valid pixel
};

// ---- image losses. The *_grad variants add scale * dL/db into grad_b.

double l1_mean(const Image& a, const Image& b);
void l1_mean_grad(const Image& a, const Image& b, double scale, Image& grad_b);

/// Mean SSIM over channels and pixels: 11x11 Gaussian window, sigma 1.5,
/// C1 = 0.01^2, C2 = 0.03^2, reflect padding at the borders.
double ssim_metric(const Image& a, const Image& b);
/// (1 - SSIM) / 2.
double d_ssim(const Image& a, const Image& b);
void d_ssim_grad(const Image& a, const Image& b, double scale, Image& grad_b);

double photometric(const Image& a, const Image& b, double lambda);
void photometric_grad(const Image& a, const Image& b, double lambda, double scale, Image& grad_b);

double l_rgb(double l_I, double l_I_trans, const LossWeights& w);

/// S * l1_mean(gt, trans).
double l_init(const Image& gt, const Image& trans, double s);

/// Mean |pseudo - rendered| over pixels where valid != 0. Returns 0 and sets
/// *empty when no pixel is valid.
double l_depth(const Image& pseudo, const Image& rendered, const Image& valid, bool* empty = nullptr);
void l_depth_grad(const Image& pseudo, const Image& rendered, const Image& valid, double scale, Image& grad_rendered);

enum class DepthAlignment { min_max, scale_shift };

/// Depth supervision with the normalization policy applied: min-max
/// normalizes both maps over valid pixels, or least-squares aligns pseudo
/// to rendered (scale_shift). Gradient flows into the rendered depth only.
double depth_loss(const Image& pseudo, const Image& rendered, const Image& valid, DepthAlignment mode,
                  Image* grad_rendered = nullptr, double scale = 1.0, bool* empty = nullptr);

double bilateral_weight(const Rgb& ci, const Rgb& cj, double gamma);

/// Edge-aware depth smoothness over 8-neighbourhoods, normalized by pixel count.
double l_bi(const Image& depth, const Image& trans_image, double gamma);
void l_bi_grad(const Image& depth, const Image& trans_image, double gamma, double scale, Image& grad_depth,
               Image& grad_trans);

/// Unweighted 8-neighbourhood smoothness of the reflection map.
double l_ref_smooth(const Image& ref_map);
void l_ref_smooth_grad(const Image& ref_map, double scale, Image& grad_ref);

/// Raw per-term values feeding total_loss.
struct LossParts {
    double l_I = 0.0, l_I_trans = 0.0, l_init = 0.0, l_depth = 0.0, l_bi = 0.0, l_ref = 0.0;
};

LossBreakdown total_loss(const LossParts& parts, const LossWeights& w, int iteration);

/// Supervision for one training view.
struct ViewTargets {
    const Image* image = nullptr;
    const Image* pseudo_clean = nullptr;  ///< optional
    const Image* pseudo_depth = nullptr;  ///< optional, 1 channel
};

struct Objective {
    LossBreakdown breakdown;
    BufferGradients grads;
    std::vector<std::string> warnings;
};

/// Evaluates the full training loss on one render and the upstream buffer
/// gradients for render_backward.
Objective evaluate_objective(const RenderOutputs& out, const ViewTargets& targets, const LossWeights& w,
                             int iteration, DepthAlignment alignment = DepthAlignment::min_max,
                             bool want_grads = true);

/// 10 log10(1 / MSE); +infinity when the images are identical.
double psnr(const Image& a, const Image& b);
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

}  // namespace refsplat
