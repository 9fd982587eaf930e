#include "refsplat/rasterizer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "refsplat/error.hpp"
#include "refsplat/parallel.hpp"

namespace refsplat {

namespace {

struct Footprint {
    double g = 0.0;       // clamped falloff
    bool clamped = false;
    double dx = 0.0, dy = 0.0;
};

// Inclusion rule shared by forward and backward: the pixel lies inside the
// splat's square footprint and the falloff is above min_weight.
bool evaluate_footprint(const Splat2D& s, int px, int py, const RenderSettings& st, Footprint& out) {
    const double dx = px - s.mean.x();
    const double dy = py - s.mean.y();
    if (std::abs(dx) > s.radius || std::abs(dy) > s.radius) return false;
    const double power = -0.5 * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
    if (power > 0.0) return false;
    double g = std::exp(power);
    if (g < st.min_weight) return false;
    out.clamped = g > st.max_weight;
    out.g = out.clamped ? st.max_weight : g;
    out.dx = dx;
    out.dy = dy;
    return true;
}

struct SplatParams {
    double alpha_trans, alpha_ref, beta_ref;
};

void check_render_inputs(const GaussianSet& scene, const Camera& cam, int active_sh_degree,
                         const RenderSettings& settings) {
    cam.validate();
    if (active_sh_degree < 0 || active_sh_degree > scene.sh_degree)
        throw DomainError("active SH degree " + std::to_string(active_sh_degree) + " exceeds scene degree " +
                          std::to_string(scene.sh_degree));
    if (settings.tile_size <= 0) throw ConfigError("tile size must be positive");
}

Rgb sh_color(std::span<const double> coeffs, int per_channel, std::span<const double> basis, int count) {
    Rgb c{};
    for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int k = 0; k < count; ++k) acc += coeffs[ch * per_channel + k] * basis[k];
        c[ch] = acc;
    }
    return c;
}

Rgb clamp_color(Rgb raw) {
    for (double& v : raw) v = std::max(0.0, v + 0.5);
    return raw;
}

// Projection, sorting, colors and tile binning.
RenderTrace prepare(const GaussianSet& scene, const Camera& cam, int active_sh_degree, const Rgb& background,
                    const RenderSettings& settings) {
    RenderTrace tr;
    tr.width = cam.width;
    tr.height = cam.height;
    tr.tiles_x = (cam.width + settings.tile_size - 1) / settings.tile_size;
    tr.tiles_y = (cam.height + settings.tile_size - 1) / settings.tile_size;
    tr.active_sh_degree = active_sh_degree;
    tr.background = background;
    tr.settings = settings;
    tr.scene_size = scene.size();

    const std::size_t n = scene.size();
    std::vector<std::optional<Splat2D>> projected(n);
    const ProjectionOptions popts{settings.dilation, settings.footprint_sigma};
    parallel_for(n, [&](std::size_t i) { projected[i] = project_gaussian(scene, i, cam, popts); });

    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (projected[i]) order.push_back(i);
    tr.culled = n - order.size();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double da = projected[a]->depth, db = projected[b]->depth;
        return da < db || (da == db && a < b);
    });

    tr.splat_of_gaussian.assign(n, RenderTrace::npos);
    tr.splats.reserve(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        tr.splat_of_gaussian[order[k]] = k;
        tr.splats.push_back(*projected[order[k]]);
    }

    const Eigen::Vector3d center = cam.center();
    const int count = sh_coeff_count(active_sh_degree);
    const int per = scene.sh_per_channel();
    tr.color_trans.resize(tr.splats.size());
    tr.color_ref.resize(tr.splats.size());
    parallel_for(tr.splats.size(), [&](std::size_t k) {
        const std::size_t i = tr.splats[k].index;
        const Eigen::Vector3d dir = (scene.position(i) - center).normalized();
        std::array<double, sh_coeff_count(kMaxShDegree)> basis{};
        sh_basis_all(dir, active_sh_degree, basis);
        tr.color_trans[k] = clamp_color(sh_color(scene.sh_trans_of(i), per, basis, count));
        tr.color_ref[k] = clamp_color(sh_color(scene.sh_ref_of(i), per, basis, count));
    });

    const int ts = settings.tile_size;
    tr.tile_lists.assign(static_cast<std::size_t>(tr.tiles_x) * tr.tiles_y, {});
    for (std::size_t k = 0; k < tr.splats.size(); ++k) {
        const Splat2D& s = tr.splats[k];
        const double r = s.radius;
        const double x0f = std::max(0.0, std::ceil(s.mean.x() - r));
        const double x1f = std::min(cam.width - 1.0, std::floor(s.mean.x() + r));
        const double y0f = std::max(0.0, std::ceil(s.mean.y() - r));
        const double y1f = std::min(cam.height - 1.0, std::floor(s.mean.y() + r));
        if (x0f > x1f || y0f > y1f) continue;
        const int tx0 = static_cast<int>(x0f) / ts, tx1 = static_cast<int>(x1f) / ts;
        const int ty0 = static_cast<int>(y0f) / ts, ty1 = static_cast<int>(y1f) / ts;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                tr.tile_lists[static_cast<std::size_t>(ty) * tr.tiles_x + tx].push_back(static_cast<std::uint32_t>(k));
    }
    return tr;
}

std::vector<SplatParams> splat_params(const GaussianSet& scene, const RenderTrace& tr) {
    std::vector<SplatParams> p(tr.splats.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
        const std::size_t i = tr.splats[k].index;
        p[k] = {scene.alpha_trans(i), scene.alpha_ref(i), scene.beta_ref(i)};
    }
    return p;
}

RenderOutputs render_impl(const GaussianSet& scene, const Camera& cam, int active_sh_degree, const Rgb& background,
                          const RenderSettings& settings, const EditSpec* edit) {
    check_render_inputs(scene, cam, active_sh_degree, settings);
    RenderOutputs out;
    out.trace = prepare(scene, cam, active_sh_degree, background, settings);
    const RenderTrace& tr = out.trace;
    const int w = cam.width, h = cam.height, ts = settings.tile_size;

    out.image = Image(w, h, 3);
    out.image_raw = Image(w, h, 3);
    out.color_trans = Image(w, h, 3);
    out.color_ref = Image(w, h, 3);
    out.image_trans = Image(w, h, 3);
    out.image_ref = Image(w, h, 3);
    out.ref_map = Image(w, h, 1);
    out.trans_map = Image(w, h, 1);
    out.depth = Image(w, h, 1);
    out.coverage = Image(w, h, 1);
    out.trace.n_contrib.assign(static_cast<std::size_t>(w) * h, 0);

    const std::vector<SplatParams> params = splat_params(scene, tr);
    const std::size_t n_tiles = tr.tile_lists.size();

    parallel_for(n_tiles, [&](std::size_t tile) {
        const int tx = static_cast<int>(tile % tr.tiles_x), ty = static_cast<int>(tile / tr.tiles_x);
        const auto& list = tr.tile_lists[tile];
        for (int py = ty * ts; py < std::min(h, (ty + 1) * ts); ++py) {
            for (int px = tx * ts; px < std::min(w, (tx + 1) * ts); ++px) {
                double t_trans = 1.0, t_ref = 1.0, t_beta = 1.0;
                Rgb ct{}, cr{};
                double ref = 0.0, depth_num = 0.0;
                std::uint32_t consumed = 0;
                for (std::size_t e = 0; e < list.size(); ++e) {
                    const Splat2D& s = tr.splats[list[e]];
                    Footprint f;
                    if (!evaluate_footprint(s, px, py, settings, f)) {
                        consumed = static_cast<std::uint32_t>(e + 1);
                        continue;
                    }
                    const SplatParams& sp = params[list[e]];
                    const double at = sp.alpha_trans * f.g;
                    const double ar = sp.alpha_ref * f.g;
                    if (settings.stop_transmittance > 0.0 && t_trans * (1.0 - at) < settings.stop_transmittance) break;
                    const Rgb& c_t = tr.color_trans[list[e]];
                    const Rgb& c_r = tr.color_ref[list[e]];
                    const double wt = at * t_trans, wr = ar * t_ref;
                    for (int c = 0; c < 3; ++c) {
                        ct[c] += c_t[c] * wt;
                        cr[c] += c_r[c] * wr;
                    }
                    depth_num += s.depth * wt;
                    ref += sp.beta_ref * at * t_beta;
                    t_trans *= 1.0 - at;
                    t_ref *= 1.0 - ar;
                    t_beta *= 1.0 - sp.beta_ref;
                    consumed = static_cast<std::uint32_t>(e + 1);
                }
                for (int c = 0; c < 3; ++c) ct[c] += t_trans * background[c];
                const double coverage = 1.0 - t_trans;
                const double scale =
                    edit ? 1.0 + (edit->scale - 1.0) * edit->mask.at(px, py) : 1.0;

                out.trace.n_contrib[static_cast<std::size_t>(py) * w + px] = consumed;
                out.ref_map.at(px, py) = ref;
                out.trans_map.at(px, py) = 1.0 - ref;
                out.coverage.at(px, py) = coverage;
                out.depth.at(px, py) = coverage > settings.depth_min_coverage ? depth_num / coverage : 0.0;
                for (int c = 0; c < 3; ++c) {
                    const double it = (1.0 - ref) * ct[c];
                    const double ir = ref * cr[c];
                    const double raw = edit ? it + scale * ir : it + ir;
                    out.color_trans.at(px, py, c) = ct[c];
                    out.color_ref.at(px, py, c) = cr[c];
                    out.image_trans.at(px, py, c) = it;
                    out.image_ref.at(px, py, c) = ir;
                    out.image_raw.at(px, py, c) = raw;
                    out.image.at(px, py, c) = std::clamp(raw, 0.0, 1.0);
                }
            }
        }
    });
    return out;
}

// Accumulated dL/d(screen-space quantities) for one splat.
struct SplatGrad {
    double mean_u = 0, mean_v = 0;
    double conic_a = 0, conic_b = 0, conic_c = 0;
    double alpha_trans = 0, alpha_ref = 0, beta_ref = 0;
    double depth = 0;
    Rgb color_trans{}, color_ref{};

    void add(const SplatGrad& o) {
        mean_u += o.mean_u;
        mean_v += o.mean_v;
        conic_a += o.conic_a;
        conic_b += o.conic_b;
        conic_c += o.conic_c;
        alpha_trans += o.alpha_trans;
        alpha_ref += o.alpha_ref;
        beta_ref += o.beta_ref;
        depth += o.depth;
        for (int c = 0; c < 3; ++c) {
            color_trans[c] += o.color_trans[c];
            color_ref[c] += o.color_ref[c];
        }
    }
};

void check_upstream(const Image& g, int w, int h, int channels, const char* name) {
    if (g.empty()) return;
    if (g.width != w || g.height != h || g.channels != channels)
        throw ConfigError(std::string("upstream gradient '") + name + "' does not match the render target");
}

double value_or_zero(const Image& img, int x, int y, int c = 0) { return img.empty() ? 0.0 : img.at(x, y, c); }

struct PixelEntry {
    std::uint32_t splat;
    Footprint f;
    double at, ar;
    double t_trans, t_ref, t_beta;  // transmittances before this entry
};

// Backward of one Gaussian from its screen-space gradient.
void backward_gaussian(const GaussianSet& scene, const Camera& cam, const RenderTrace& tr, std::size_t k,
                       const SplatGrad& sg, ParamGradients& grads, double* screen_norm) {
    const Splat2D& s = tr.splats[k];
    const std::size_t i = s.index;

    // Activations.
    const double a_t = scene.alpha_trans(i), a_r = scene.alpha_ref(i), b_r = scene.beta_ref(i);
    grads.raw_alpha_trans[i] = sg.alpha_trans * a_t * (1.0 - a_t);
    grads.raw_alpha_ref[i] = sg.alpha_ref * a_r * (1.0 - a_r);
    grads.raw_beta_ref[i] = sg.beta_ref * b_r * (1.0 - b_r);

    // SH colors and the view direction.
    const Eigen::Vector3d mu = scene.position(i);
    const Eigen::Vector3d offset = mu - cam.center();
    const double dist = offset.norm();
    const Eigen::Vector3d dir = offset / dist;
    const int deg = tr.active_sh_degree;
    const int count = sh_coeff_count(deg);
    const int per = scene.sh_per_channel();
    std::array<double, sh_coeff_count(kMaxShDegree)> basis{};
    std::array<Eigen::Vector3d, sh_coeff_count(kMaxShDegree)> dbasis{};
    sh_basis_all(dir, deg, basis, std::span<Eigen::Vector3d>(dbasis.data(), count));

    Eigen::Vector3d g_dir = Eigen::Vector3d::Zero();
    auto color_backward = [&](std::span<const double> coeffs, const Rgb& g_color, std::vector<double>& g_sh) {
        const Rgb raw = sh_color(coeffs, per, basis, count);
        for (int c = 0; c < 3; ++c) {
            const double g_raw = raw[c] + 0.5 > 0.0 ? g_color[c] : 0.0;
            if (g_raw == 0.0) continue;
            double* out = g_sh.data() + i * scene.sh_stride() + c * per;
            for (int kk = 0; kk < count; ++kk) {
                out[kk] = g_raw * basis[kk];
                g_dir += g_raw * coeffs[c * per + kk] * dbasis[kk];
            }
        }
    };
    color_backward(scene.sh_trans_of(i), sg.color_trans, grads.sh_trans);
    color_backward(scene.sh_ref_of(i), sg.color_ref, grads.sh_ref);
    Eigen::Vector3d g_mu = (g_dir - dir * dir.dot(g_dir)) / dist;

    // Conic -> screen covariance.
    Eigen::Matrix2d conic;
    conic << s.conic[0], s.conic[1], s.conic[1], s.conic[2];
    Eigen::Matrix2d g_conic;
    g_conic << sg.conic_a, 0.5 * sg.conic_b, 0.5 * sg.conic_b, sg.conic_c;
    const Eigen::Matrix2d g_cov2 = -conic * g_conic * conic;

    // Screen covariance -> (J W) and Sigma.
    const Eigen::Vector3d t = cam.rotation * mu + cam.translation;
    const double tx = t.x(), ty = t.y(), tz = t.z(), iz = 1.0 / tz, iz2 = iz * iz, iz3 = iz2 * iz;
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * iz, 0.0, -cam.fx * tx * iz2, 0.0, cam.fy * iz, -cam.fy * ty * iz2;
    const Eigen::Matrix<double, 2, 3> jw = j * cam.rotation;
    const Eigen::Matrix3d rot = rotation_from_quaternion(scene.rotation(i));
    const Eigen::Vector3d scale = scene.scale(i);
    const Eigen::Matrix3d m = rot * scale.asDiagonal();
    const Eigen::Matrix3d sigma = m * m.transpose();

    const Eigen::Matrix3d g_sigma = jw.transpose() * g_cov2 * jw;
    const Eigen::Matrix<double, 2, 3> g_jw = 2.0 * g_cov2 * jw * sigma;
    const Eigen::Matrix<double, 2, 3> g_j = g_jw * cam.rotation.transpose();

    // Camera-space mean.
    Eigen::Vector3d g_t = Eigen::Vector3d::Zero();
    g_t.x() += sg.mean_u * cam.fx * iz;
    g_t.z() += -sg.mean_u * cam.fx * tx * iz2;
    g_t.y() += sg.mean_v * cam.fy * iz;
    g_t.z() += -sg.mean_v * cam.fy * ty * iz2;
    g_t.z() += sg.depth;
    g_t.z() += g_j(0, 0) * (-cam.fx * iz2);
    g_t.x() += g_j(0, 2) * (-cam.fx * iz2);
    g_t.z() += g_j(0, 2) * (2.0 * cam.fx * tx * iz3);
    g_t.z() += g_j(1, 1) * (-cam.fy * iz2);
    g_t.y() += g_j(1, 2) * (-cam.fy * iz2);
    g_t.z() += g_j(1, 2) * (2.0 * cam.fy * ty * iz3);
    g_mu += cam.rotation.transpose() * g_t;
    for (int a = 0; a < 3; ++a) grads.positions[3 * i + a] = g_mu[a];

    // Sigma = M M^T, M = R S.
    const Eigen::Matrix3d g_m = 2.0 * g_sigma * m;
    for (int a = 0; a < 3; ++a) grads.log_scales[3 * i + a] = g_m.col(a).dot(rot.col(a)) * scale[a];
    const Eigen::Matrix3d g_r = g_m * scale.asDiagonal();

    const Eigen::Vector4d q_raw = scene.rotation(i);
    const double qn = q_raw.norm();
    const Eigen::Vector4d q = q_raw / qn;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    const auto& G = g_r;
    Eigen::Vector4d g_q;
    g_q[0] = 2 * (-z * G(0, 1) + y * G(0, 2) + z * G(1, 0) - x * G(1, 2) - y * G(2, 0) + x * G(2, 1));
    g_q[1] = 2 * (y * G(0, 1) + z * G(0, 2) + y * G(1, 0) - 2 * x * G(1, 1) - w * G(1, 2) + z * G(2, 0) +
                  w * G(2, 1) - 2 * x * G(2, 2));
    g_q[2] = 2 * (-2 * y * G(0, 0) + x * G(0, 1) + w * G(0, 2) + x * G(1, 0) + z * G(1, 2) - w * G(2, 0) +
                  z * G(2, 1) - 2 * y * G(2, 2));
    g_q[3] = 2 * (-2 * z * G(0, 0) - w * G(0, 1) + x * G(0, 2) + w * G(1, 0) - 2 * z * G(1, 1) + y * G(1, 2) +
                  x * G(2, 0) + y * G(2, 1));
    const Eigen::Vector4d g_qraw = (g_q - q * q.dot(g_q)) / qn;
    for (int a = 0; a < 4; ++a) grads.rotations[4 * i + a] = g_qraw[a];

    if (screen_norm) {
        const double gu = sg.mean_u * 0.5 * cam.width, gv = sg.mean_v * 0.5 * cam.height;
        *screen_norm = std::sqrt(gu * gu + gv * gv);
    }
}

}  // namespace

RenderOutputs render_forward(const GaussianSet& scene, const Camera& cam, int active_sh_degree, const Rgb& background,
                             const RenderSettings& settings) {
    return render_impl(scene, cam, active_sh_degree, background, settings, nullptr);
}

RenderOutputs render_edited(const GaussianSet& scene, const Camera& cam, int active_sh_degree, const Rgb& background,
                            const EditSpec& edit, const RenderSettings& settings) {
    if (!(edit.scale >= 0.0) || !std::isfinite(edit.scale)) throw DomainError("edit scale must be >= 0");
    if (edit.mask.width != cam.width || edit.mask.height != cam.height || edit.mask.channels != 1)
        throw ConfigError("edit mask does not match the render target");
    return render_impl(scene, cam, active_sh_degree, background, settings, &edit);
}

ParamGradients render_backward(const GaussianSet& scene, const Camera& cam, const RenderOutputs& outputs,
                               const BufferGradients& up, BackwardDiagnostics* diagnostics) {
    const RenderTrace& tr = outputs.trace;
    if (tr.scene_size != scene.size() || tr.width != cam.width || tr.height != cam.height ||
        tr.active_sh_degree > scene.sh_degree || tr.n_contrib.size() != static_cast<std::size_t>(cam.width) * cam.height)
        throw ContractError("render_backward: outputs were not produced for this scene and camera");
    const int w = cam.width, h = cam.height;
    check_upstream(up.image, w, h, 3, "image");
    check_upstream(up.image_trans, w, h, 3, "image_trans");
    check_upstream(up.image_ref, w, h, 3, "image_ref");
    check_upstream(up.color_trans, w, h, 3, "color_trans");
    check_upstream(up.color_ref, w, h, 3, "color_ref");
    check_upstream(up.ref_map, w, h, 1, "ref_map");
    check_upstream(up.depth, w, h, 1, "depth");
    check_upstream(up.coverage, w, h, 1, "coverage");

    const RenderSettings& st = tr.settings;
    const int ts = st.tile_size;
    const std::vector<SplatParams> params = splat_params(scene, tr);
    const std::size_t n_tiles = tr.tile_lists.size();

    // Per-tile partials, indexed by position in the tile list.
    std::vector<std::vector<SplatGrad>> partial(n_tiles);
    parallel_for(n_tiles, [&](std::size_t tile) {
        const auto& list = tr.tile_lists[tile];
        auto& acc = partial[tile];
        acc.assign(list.size(), SplatGrad{});
        if (list.empty()) return;
        const int tx = static_cast<int>(tile % tr.tiles_x), ty = static_cast<int>(tile / tr.tiles_x);
        std::vector<PixelEntry> entries;
        std::vector<std::size_t> positions;
        for (int py = ty * ts; py < std::min(h, (ty + 1) * ts); ++py) {
            for (int px = tx * ts; px < std::min(w, (tx + 1) * ts); ++px) {
                const std::uint32_t consumed = tr.n_contrib[static_cast<std::size_t>(py) * w + px];
                entries.clear();
                positions.clear();
                double t_trans = 1.0, t_ref = 1.0, t_beta = 1.0, depth_num = 0.0;
                for (std::uint32_t e = 0; e < consumed; ++e) {
                    Footprint f;
                    if (!evaluate_footprint(tr.splats[list[e]], px, py, st, f)) continue;
                    const SplatParams& sp = params[list[e]];
                    PixelEntry pe{list[e], f, sp.alpha_trans * f.g, sp.alpha_ref * f.g, t_trans, t_ref, t_beta};
                    depth_num += tr.splats[list[e]].depth * pe.at * t_trans;
                    t_trans *= 1.0 - pe.at;
                    t_ref *= 1.0 - pe.ar;
                    t_beta *= 1.0 - sp.beta_ref;
                    entries.push_back(pe);
                    positions.push_back(e);
                }
                if (entries.empty() && up.coverage.empty() && up.depth.empty()) continue;

                const double ref = outputs.ref_map.at(px, py);
                const double trans = 1.0 - ref;
                Rgb g_ct{}, g_cr{};
                double g_ref = value_or_zero(up.ref_map, px, py);
                for (int c = 0; c < 3; ++c) {
                    const double raw = outputs.image_raw.at(px, py, c);
                    const double g_img = (raw > 0.0 && raw < 1.0) ? value_or_zero(up.image, px, py, c) : 0.0;
                    const double g_it = value_or_zero(up.image_trans, px, py, c);
                    const double g_ir = value_or_zero(up.image_ref, px, py, c);
                    const double ct = outputs.color_trans.at(px, py, c), cr = outputs.color_ref.at(px, py, c);
                    g_ct[c] = (g_img + g_it) * trans + value_or_zero(up.color_trans, px, py, c);
                    g_cr[c] = (g_img + g_ir) * ref + value_or_zero(up.color_ref, px, py, c);
                    g_ref += g_img * (cr - ct) + g_ir * cr - g_it * ct;
                }
                const double coverage = 1.0 - t_trans;
                double g_num = 0.0, g_cov = value_or_zero(up.coverage, px, py);
                if (coverage > st.depth_min_coverage) {
                    const double g_depth = value_or_zero(up.depth, px, py);
                    g_num = g_depth / coverage;
                    g_cov -= g_depth * depth_num / (coverage * coverage);
                }

                // Back-to-front with "rest of the chain" accumulators.
                Rgb rest_t = tr.background, rest_r{};
                double rest_cov = 0.0, rest_depth = 0.0, rest_ref = 0.0;
                for (std::size_t e = entries.size(); e-- > 0;) {
                    const PixelEntry& pe = entries[e];
                    const SplatParams& sp = params[pe.splat];
                    const Splat2D& s = tr.splats[pe.splat];
                    const Rgb& c_t = tr.color_trans[pe.splat];
                    const Rgb& c_r = tr.color_ref[pe.splat];

                    double g_at = 0.0, g_ar = 0.0;
                    SplatGrad& sgd = acc[positions[e]];
                    for (int c = 0; c < 3; ++c) {
                        g_at += g_ct[c] * (c_t[c] - rest_t[c]);
                        g_ar += g_cr[c] * (c_r[c] - rest_r[c]);
                        sgd.color_trans[c] += g_ct[c] * pe.at * pe.t_trans;
                        sgd.color_ref[c] += g_cr[c] * pe.ar * pe.t_ref;
                    }
                    g_at += g_num * (s.depth - rest_depth) + g_cov * (1.0 - rest_cov);
                    g_at *= pe.t_trans;
                    g_at += g_ref * sp.beta_ref * pe.t_beta;
                    g_ar *= pe.t_ref;
                    sgd.beta_ref += g_ref * pe.t_beta * (pe.at - rest_ref);
                    sgd.depth += g_num * pe.at * pe.t_trans;
                    sgd.alpha_trans += g_at * pe.f.g;
                    sgd.alpha_ref += g_ar * pe.f.g;
                    if (!pe.f.clamped) {
                        const double g_g = g_at * sp.alpha_trans + g_ar * sp.alpha_ref;
                        const double gg = g_g * pe.f.g;
                        const double dx = pe.f.dx, dy = pe.f.dy;
                        sgd.mean_u += gg * (s.conic[0] * dx + s.conic[1] * dy);
                        sgd.mean_v += gg * (s.conic[1] * dx + s.conic[2] * dy);
                        sgd.conic_a += -0.5 * gg * dx * dx;
                        sgd.conic_b += -gg * dx * dy;
                        sgd.conic_c += -0.5 * gg * dy * dy;
                    }

                    for (int c = 0; c < 3; ++c) {
                        rest_t[c] = pe.at * c_t[c] + (1.0 - pe.at) * rest_t[c];
                        rest_r[c] = pe.ar * c_r[c] + (1.0 - pe.ar) * rest_r[c];
                    }
                    rest_cov = pe.at + (1.0 - pe.at) * rest_cov;
                    rest_depth = pe.at * s.depth + (1.0 - pe.at) * rest_depth;
                    rest_ref = sp.beta_ref * pe.at + (1.0 - sp.beta_ref) * rest_ref;
                }
            }
        }
    });

    // Fixed tile order reduction.
    std::vector<SplatGrad> per_splat(tr.splats.size());
    for (std::size_t tile = 0; tile < n_tiles; ++tile) {
        const auto& list = tr.tile_lists[tile];
        for (std::size_t e = 0; e < list.size(); ++e) per_splat[list[e]].add(partial[tile][e]);
    }

    ParamGradients grads = GaussianArrays::zeros_like(scene);
    std::vector<double> screen(scene.size(), 0.0);
    parallel_for(tr.splats.size(), [&](std::size_t k) {
        backward_gaussian(scene, cam, tr, k, per_splat[k], grads, &screen[tr.splats[k].index]);
    });

    if (diagnostics) {
        diagnostics->screen_grad_norm = std::move(screen);
        diagnostics->visible.assign(scene.size(), false);
        for (const Splat2D& s : tr.splats) diagnostics->visible[s.index] = true;
    }
    return grads;
}

PixelResult reference_composite(std::span<const PixelSplat> ordered, const Rgb& background, double depth_min_coverage) {
    using real = long double;
    real transmittance = 1, ref_transmittance = 1, beta_product = 1;
    std::array<real, 3> ct{}, cr{};
    real ref = 0, depth_num = 0, coverage = 0;
    for (const PixelSplat& s : ordered) {
        const real at = static_cast<real>(s.alpha_trans) * s.weight;
        const real ar = static_cast<real>(s.alpha_ref) * s.weight;
        for (int c = 0; c < 3; ++c) {
            ct[c] += static_cast<real>(s.color_trans[c]) * at * transmittance;
            cr[c] += static_cast<real>(s.color_ref[c]) * ar * ref_transmittance;
        }
        ref += static_cast<real>(s.beta_ref) * at * beta_product;
        depth_num += static_cast<real>(s.depth) * at * transmittance;
        coverage += at * transmittance;
        transmittance *= 1 - at;
        ref_transmittance *= 1 - ar;
        beta_product *= 1 - static_cast<real>(s.beta_ref);
    }
    PixelResult r;
    r.ref_map = static_cast<double>(ref);
    r.coverage = static_cast<double>(coverage);
    r.depth = coverage > depth_min_coverage ? static_cast<double>(depth_num / coverage) : 0.0;
    for (int c = 0; c < 3; ++c) {
        const real trans_color = ct[c] + transmittance * background[c];
        const real raw = (1 - ref) * trans_color + ref * cr[c];
        r.color_trans[c] = static_cast<double>(trans_color);
        r.color_ref[c] = static_cast<double>(cr[c]);
        r.image_raw[c] = static_cast<double>(raw);
        r.image[c] = std::clamp(static_cast<double>(raw), 0.0, 1.0);
    }
    return r;
}

}  // namespace refsplat
