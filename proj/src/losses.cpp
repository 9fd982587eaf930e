#include "refsplat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "refsplat/error.hpp"

namespace refsplat {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* op) {
    if (!a.same_shape(b)) throw ConfigError(std::string(op) + ": image shapes differ");
}

void require_extent(const Image& a, const Image& b, const char* op) {
    if (!a.same_extent(b)) throw ConfigError(std::string(op) + ": image extents differ");
}

void ensure_grad(Image& g, const Image& like) {
    if (g.empty()) g = Image(like.width, like.height, like.channels);
    if (!g.same_shape(like)) throw ConfigError("gradient buffer shape mismatch");
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// 8-neighbourhood offsets; pixels at the border use in-bounds neighbours only.
constexpr int kOffsets[8][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}};

template <typename Visit>
void for_each_neighbour_pair(int w, int h, Visit&& visit) {
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (const auto& o : kOffsets) {
                const int nx = x + o[0], ny = y + o[1];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                visit(x, y, nx, ny);
            }
}

bool is_valid(const Image& valid, int x, int y) { return valid.at(x, y) != 0.0; }

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    int lo_x = -1, lo_y = -1, hi_x = -1, hi_y = -1;
};

Range valid_range(const Image& img, const Image& valid) {
    Range r;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (!is_valid(valid, x, y)) continue;
            const double v = img.at(x, y);
            if (v < r.lo) {
                r.lo = v;
                r.lo_x = x;
                r.lo_y = y;
            }
            if (v > r.hi) {
                r.hi = v;
                r.hi_x = x;
                r.hi_y = y;
            }
        }
    return r;
}

Image min_max_normalize(const Image& img, const Image& valid, const Range& r) {
    Image out(img.width, img.height, 1);
    const double span = r.hi - r.lo;
    if (!(span > 1e-12)) return out;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (is_valid(valid, x, y)) out.at(x, y) = (img.at(x, y) - r.lo) / span;
    return out;
}

// Least-squares projection of v (over valid pixels) onto span{basis, 1}.
Image project_affine(const Image& basis, const Image& v, const Image& valid) {
    double spp = 0, sp = 0, n = 0, spv = 0, sv = 0;
    for (int y = 0; y < v.height; ++y)
        for (int x = 0; x < v.width; ++x) {
            if (!is_valid(valid, x, y)) continue;
            const double p = basis.at(x, y), val = v.at(x, y);
            spp += p * p;
            sp += p;
            n += 1;
            spv += p * val;
            sv += val;
        }
    Image out(v.width, v.height, 1);
    if (n == 0) return out;
    const double det = spp * n - sp * sp;
    double s = 0.0, t = sv / n;
    if (std::abs(det) > 1e-12 * std::max(1.0, spp * n)) {
        s = (n * spv - sp * sv) / det;
        t = (spp * sv - sp * spv) / det;
    }
    for (int y = 0; y < v.height; ++y)
        for (int x = 0; x < v.width; ++x)
            if (is_valid(valid, x, y)) out.at(x, y) = s * basis.at(x, y) + t;
    return out;
}

}  // namespace

void LossWeights::validate() const {
    if (!(lambda_photo >= 0.0 && lambda_photo <= 1.0)) throw DomainError("lambda_photo must lie in [0, 1]");
    for (double v : {s_trans, lambda_init, lambda_depth, lambda_bi, lambda_ref})
        if (!(v >= 0.0)) throw DomainError("loss weights must be non-negative");
    if (!(gamma > 0.0)) throw DomainError("gamma must be positive");
    if (init_cutoff < 0) throw DomainError("init_cutoff must be non-negative");
}

double l1_mean(const Image& a, const Image& b) {
    require_same_shape(a, b, "l1_mean");
    if (a.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
    return sum / static_cast<double>(a.data.size());
}

void l1_mean_grad(const Image& a, const Image& b, double scale, Image& grad_b) {
    require_same_shape(a, b, "l1_mean");
    ensure_grad(grad_b, b);
    const double k = scale / static_cast<double>(a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) grad_b.data[i] += k * sign(b.data[i] - a.data[i]);
}

double photometric(const Image& a, const Image& b, double lambda) {
    if (lambda == 1.0) return l1_mean(a, b);
    return lambda * l1_mean(a, b) + (1.0 - lambda) * d_ssim(a, b);
}

void photometric_grad(const Image& a, const Image& b, double lambda, double scale, Image& grad_b) {
    l1_mean_grad(a, b, lambda * scale, grad_b);
    if (lambda != 1.0) d_ssim_grad(a, b, (1.0 - lambda) * scale, grad_b);
}

double l_rgb(double l_I, double l_I_trans, const LossWeights& w) {
    return w.lambda_photo * l_I + w.s_trans * (1.0 - w.lambda_photo) * l_I_trans;
}

double l_init(const Image& gt, const Image& trans, double s) { return s * l1_mean(gt, trans); }

double l_depth(const Image& pseudo, const Image& rendered, const Image& valid, bool* empty) {
    require_same_shape(pseudo, rendered, "l_depth");
    require_extent(pseudo, valid, "l_depth");
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < pseudo.height; ++y)
        for (int x = 0; x < pseudo.width; ++x)
            if (is_valid(valid, x, y)) {
                sum += std::abs(pseudo.at(x, y) - rendered.at(x, y));
                ++n;
            }
    if (empty) *empty = n == 0;
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

void l_depth_grad(const Image& pseudo, const Image& rendered, const Image& valid, double scale, Image& grad) {
    require_same_shape(pseudo, rendered, "l_depth");
    ensure_grad(grad, rendered);
    std::size_t n = 0;
    for (double v : valid.data) n += v != 0.0;
    if (n == 0) return;
    const double k = scale / static_cast<double>(n);
    for (int y = 0; y < pseudo.height; ++y)
        for (int x = 0; x < pseudo.width; ++x)
            if (is_valid(valid, x, y)) grad.at(x, y) += k * sign(rendered.at(x, y) - pseudo.at(x, y));
}

double depth_loss(const Image& pseudo, const Image& rendered, const Image& valid, DepthAlignment mode,
                  Image* grad_rendered, double scale, bool* empty) {
    require_same_shape(pseudo, rendered, "depth_loss");
    require_extent(pseudo, valid, "depth_loss");
    if (mode == DepthAlignment::min_max) {
        const Range rp = valid_range(pseudo, valid), rr = valid_range(rendered, valid);
        const Image np = min_max_normalize(pseudo, valid, rp);
        const Image nr = min_max_normalize(rendered, valid, rr);
        const double value = l_depth(np, nr, valid, empty);
        if (grad_rendered && rr.lo_x >= 0) {
            ensure_grad(*grad_rendered, rendered);
            Image g_norm;
            l_depth_grad(np, nr, valid, scale, g_norm);
            const double span = rr.hi - rr.lo;
            if (span > 1e-12) {
                double g_lo = 0.0, g_hi = 0.0;
                for (int y = 0; y < rendered.height; ++y)
                    for (int x = 0; x < rendered.width; ++x) {
                        if (!is_valid(valid, x, y)) continue;
                        const double g = g_norm.at(x, y);
                        grad_rendered->at(x, y) += g / span;
                        g_lo += g * (nr.at(x, y) - 1.0) / span;
                        g_hi += -g * nr.at(x, y) / span;
                    }
                grad_rendered->at(rr.lo_x, rr.lo_y) += g_lo;
                grad_rendered->at(rr.hi_x, rr.hi_y) += g_hi;
            }
        }
        return value;
    }

    // scale_shift: residual r = P D - D, P the projection onto span{pseudo, 1}.
    const Image aligned = project_affine(pseudo, rendered, valid);
    const double value = l_depth(aligned, rendered, valid, empty);
    if (grad_rendered) {
        ensure_grad(*grad_rendered, rendered);
        std::size_t n = 0;
        for (double v : valid.data) n += v != 0.0;
        if (n == 0) return value;
        Image g_r(rendered.width, rendered.height, 1);
        for (int y = 0; y < rendered.height; ++y)
            for (int x = 0; x < rendered.width; ++x)
                if (is_valid(valid, x, y))
                    g_r.at(x, y) = scale * sign(aligned.at(x, y) - rendered.at(x, y)) / static_cast<double>(n);
        const Image pg = project_affine(pseudo, g_r, valid);
        for (int y = 0; y < rendered.height; ++y)
            for (int x = 0; x < rendered.width; ++x)
                if (is_valid(valid, x, y)) grad_rendered->at(x, y) += pg.at(x, y) - g_r.at(x, y);
    }
    return value;
}

double bilateral_weight(const Rgb& ci, const Rgb& cj, double gamma) {
    if (!(gamma > 0.0)) throw DomainError("bilateral_weight: gamma must be positive");
    const double d = std::abs(ci[0] - cj[0]) + std::abs(ci[1] - cj[1]) + std::abs(ci[2] - cj[2]);
    return std::exp(-d / gamma);
}

namespace {
Rgb rgb_at(const Image& img, int x, int y) { return {img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)}; }
}  // namespace

double l_bi(const Image& depth, const Image& trans_image, double gamma) {
    require_extent(depth, trans_image, "l_bi");
    if (depth.empty()) return 0.0;
    double sum = 0.0;
    for_each_neighbour_pair(depth.width, depth.height, [&](int x, int y, int nx, int ny) {
        sum += bilateral_weight(rgb_at(trans_image, x, y), rgb_at(trans_image, nx, ny), gamma) *
               std::abs(depth.at(x, y) - depth.at(nx, ny));
    });
    return sum / static_cast<double>(depth.pixel_count());
}

void l_bi_grad(const Image& depth, const Image& trans_image, double gamma, double scale, Image& grad_depth,
               Image& grad_trans) {
    require_extent(depth, trans_image, "l_bi");
    ensure_grad(grad_depth, depth);
    ensure_grad(grad_trans, trans_image);
    const double k = scale / static_cast<double>(depth.pixel_count());
    for_each_neighbour_pair(depth.width, depth.height, [&](int x, int y, int nx, int ny) {
        const Rgb ci = rgb_at(trans_image, x, y), cj = rgb_at(trans_image, nx, ny);
        const double wgt = bilateral_weight(ci, cj, gamma);
        const double dd = depth.at(x, y) - depth.at(nx, ny);
        grad_depth.at(x, y) += k * wgt * sign(dd);
        grad_depth.at(nx, ny) -= k * wgt * sign(dd);
        const double g_w = k * std::abs(dd);
        if (g_w == 0.0) return;
        for (int c = 0; c < 3; ++c) {
            const double s = sign(ci[c] - cj[c]);
            grad_trans.at(x, y, c) += -g_w * wgt / gamma * s;
            grad_trans.at(nx, ny, c) += g_w * wgt / gamma * s;
        }
    });
}

double l_ref_smooth(const Image& ref_map) {
    if (ref_map.empty()) return 0.0;
    double sum = 0.0;
    for_each_neighbour_pair(ref_map.width, ref_map.height,
                            [&](int x, int y, int nx, int ny) { sum += std::abs(ref_map.at(x, y) - ref_map.at(nx, ny)); });
    return sum / static_cast<double>(ref_map.pixel_count());
}

void l_ref_smooth_grad(const Image& ref_map, double scale, Image& grad) {
    ensure_grad(grad, ref_map);
    const double k = scale / static_cast<double>(ref_map.pixel_count());
    for_each_neighbour_pair(ref_map.width, ref_map.height, [&](int x, int y, int nx, int ny) {
        const double s = sign(ref_map.at(x, y) - ref_map.at(nx, ny));
        grad.at(x, y) += k * s;
        grad.at(nx, ny) -= k * s;
    });
}

LossBreakdown total_loss(const LossParts& p, const LossWeights& w, int iteration) {
    LossBreakdown b;
    b.l_I = p.l_I;
    b.l_I_trans = w.enable_trans ? p.l_I_trans : 0.0;
    b.l_init = (w.enable_init && iteration < w.init_cutoff) ? p.l_init : 0.0;
    b.l_depth = w.enable_depth ? p.l_depth : 0.0;
    b.l_bi = w.enable_bi ? p.l_bi : 0.0;
    b.l_ref = w.enable_ref ? p.l_ref : 0.0;
    b.l_rgb = l_rgb(b.l_I, b.l_I_trans, w);
    b.total = b.l_rgb + w.lambda_init * b.l_init + w.lambda_depth * b.l_depth + w.lambda_bi * b.l_bi +
              w.lambda_ref * b.l_ref;
    return b;
}

Objective evaluate_objective(const RenderOutputs& out, const ViewTargets& targets, const LossWeights& w,
                             int iteration, DepthAlignment alignment, bool want_grads) {
    if (!targets.image) throw ConfigError("evaluate_objective: missing target image");
    const Image& gt = *targets.image;
    require_same_shape(gt, out.image, "evaluate_objective");

    Objective obj;
    LossParts parts;
    BufferGradients& g = obj.grads;
    const double lam = w.lambda_photo;

    parts.l_I = photometric(gt, out.image, lam);
    if (want_grads) photometric_grad(gt, out.image, lam, lam, g.image);

    if (w.enable_trans) {
        if (targets.pseudo_clean) {
            require_same_shape(*targets.pseudo_clean, out.image_trans, "pseudo-clean");
            parts.l_I_trans = photometric(*targets.pseudo_clean, out.image_trans, lam);
            if (want_grads)
                photometric_grad(*targets.pseudo_clean, out.image_trans, lam, w.s_trans * (1.0 - lam), g.image_trans);
        } else {
            obj.warnings.emplace_back("view has no pseudo-clean image; transmitted supervision skipped");
        }
    }

    if (w.enable_init && iteration < w.init_cutoff) {
        parts.l_init = l_init(gt, out.image_trans, w.s_trans);
        if (want_grads) l1_mean_grad(gt, out.image_trans, w.lambda_init * w.s_trans, g.image_trans);
    }

    bool depth_empty = false;
    if (w.enable_depth) {
        if (targets.pseudo_depth) {
            const Image& pd = *targets.pseudo_depth;
            require_same_shape(pd, out.depth, "pseudo-depth");
            Image valid(pd.width, pd.height, 1);
            const double min_cov = out.trace.settings.depth_min_coverage;
            for (int y = 0; y < pd.height; ++y)
                for (int x = 0; x < pd.width; ++x) {
                    const double p = pd.at(x, y);
                    valid.at(x, y) = (out.coverage.at(x, y) > min_cov && std::isfinite(p) && p > 0.0) ? 1.0 : 0.0;
                }
            parts.l_depth = depth_loss(pd, out.depth, valid, alignment, want_grads ? &g.depth : nullptr,
                                       w.lambda_depth, &depth_empty);
            if (depth_empty) obj.warnings.emplace_back("no valid pixels for the depth loss");
        } else {
            obj.warnings.emplace_back("view has no pseudo-depth map; depth supervision skipped");
        }
    }

    if (w.enable_bi) {
        parts.l_bi = l_bi(out.depth, out.image_trans, w.gamma);
        if (want_grads) l_bi_grad(out.depth, out.image_trans, w.gamma, w.lambda_bi, g.depth, g.image_trans);
    }

    if (w.enable_ref) {
        parts.l_ref = l_ref_smooth(out.ref_map);
        if (want_grads) l_ref_smooth_grad(out.ref_map, w.lambda_ref, g.ref_map);
    }

    obj.breakdown = total_loss(parts, w, iteration);
    obj.breakdown.depth_valid = !depth_empty;
    return obj;
}

double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b, "psnr");
    if (a.empty()) throw ConfigError("psnr: empty images");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.data.size());
    if (mse == 0.0) return kPsnrInfinite;
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace refsplat
