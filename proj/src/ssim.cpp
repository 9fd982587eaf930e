#include <array>
#include <cmath>
#include <vector>

#include "refsplat/error.hpp"
#include "refsplat/losses.hpp"

namespace refsplat {

namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& window() {
    static const std::array<double, kWindow> w = [] {
        std::array<double, kWindow> g{};
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kHalf;
            g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += g[i];
        }
        for (double& v : g) v /= sum;
        return g;
    }();
    return w;
}

// Mirror index without repeating the edge sample; period 2(n-1).
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

using Plane = std::vector<double>;

// Separable Gaussian blur of a w x h plane.
Plane blur(const Plane& in, int w, int h) {
    const auto& g = window();
    Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += g[k] * in[static_cast<std::size_t>(y) * w + reflect(x + k - kHalf, w)];
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += g[k] * tmp[static_cast<std::size_t>(reflect(y + k - kHalf, h)) * w + x];
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    return out;
}

// Adjoint of blur.
Plane blur_adjoint(const Plane& in, int w, int h) {
    const auto& g = window();
    Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = in[static_cast<std::size_t>(y) * w + x];
            for (int k = 0; k < kWindow; ++k) tmp[static_cast<std::size_t>(reflect(y + k - kHalf, h)) * w + x] += g[k] * v;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = tmp[static_cast<std::size_t>(y) * w + x];
            for (int k = 0; k < kWindow; ++k) out[static_cast<std::size_t>(y) * w + reflect(x + k - kHalf, w)] += g[k] * v;
        }
    return out;
}

Plane channel(const Image& img, int c) {
    Plane p(img.pixel_count());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * img.channels + c];
    return p;
}

void check_shapes(const Image& a, const Image& b) {
    if (!a.same_shape(b) || a.empty()) throw ConfigError("SSIM: image shapes differ or are empty");
}

struct SsimTerms {
    Plane mu1, mu2, s11, s22, s12;
};

SsimTerms terms(const Plane& a, const Plane& b, int w, int h) {
    SsimTerms t;
    Plane aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    t.mu1 = blur(a, w, h);
    t.mu2 = blur(b, w, h);
    t.s11 = blur(aa, w, h);
    t.s22 = blur(bb, w, h);
    t.s12 = blur(ab, w, h);
    for (std::size_t i = 0; i < a.size(); ++i) {
        t.s11[i] -= t.mu1[i] * t.mu1[i];
        t.s22[i] -= t.mu2[i] * t.mu2[i];
        t.s12[i] -= t.mu1[i] * t.mu2[i];
    }
    return t;
}

}  // namespace

double ssim_metric(const Image& a, const Image& b) {
    check_shapes(a, b);
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const Plane pa = channel(a, c), pb = channel(b, c);
        const SsimTerms t = terms(pa, pb, a.width, a.height);
        double sum = 0.0;
        for (std::size_t i = 0; i < pa.size(); ++i) {
            const double num = (2.0 * t.mu1[i] * t.mu2[i] + kC1) * (2.0 * t.s12[i] + kC2);
            const double den = (t.mu1[i] * t.mu1[i] + t.mu2[i] * t.mu2[i] + kC1) * (t.s11[i] + t.s22[i] + kC2);
            sum += num / den;
        }
        total += sum / static_cast<double>(pa.size());
    }
    return total / a.channels;
}

double d_ssim(const Image& a, const Image& b) { return 0.5 * (1.0 - ssim_metric(a, b)); }

void d_ssim_grad(const Image& a, const Image& b, double scale, Image& grad_b) {
    check_shapes(a, b);
    if (grad_b.empty()) grad_b = Image(b.width, b.height, b.channels);
    const int w = a.width, h = a.height;
    const double per_pixel = -0.5 * scale / (static_cast<double>(a.pixel_count()) * a.channels);
    for (int c = 0; c < a.channels; ++c) {
        const Plane pa = channel(a, c), pb = channel(b, c);
        const SsimTerms t = terms(pa, pb, w, h);
        Plane g_mu2(pa.size()), g_e22(pa.size()), g_e12(pa.size());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            const double A = 2.0 * t.mu1[i] * t.mu2[i] + kC1;
            const double B = 2.0 * t.s12[i] + kC2;
            const double C = t.mu1[i] * t.mu1[i] + t.mu2[i] * t.mu2[i] + kC1;
            const double D = t.s11[i] + t.s22[i] + kC2;
            const double d_mu2 = 2.0 * t.mu1[i] * B / (C * D) - A * B * 2.0 * t.mu2[i] / (C * C * D);
            const double d_s22 = -A * B / (C * D * D);
            const double d_s12 = 2.0 * A / (C * D);
            g_mu2[i] = per_pixel * (d_mu2 - 2.0 * t.mu2[i] * d_s22 - t.mu1[i] * d_s12);
            g_e22[i] = per_pixel * d_s22;
            g_e12[i] = per_pixel * d_s12;
        }
        const Plane b_mu2 = blur_adjoint(g_mu2, w, h);
        const Plane b_e22 = blur_adjoint(g_e22, w, h);
        const Plane b_e12 = blur_adjoint(g_e12, w, h);
        for (std::size_t i = 0; i < pa.size(); ++i)
            grad_b.data[i * b.channels + c] += b_mu2[i] + 2.0 * pb[i] * b_e22[i] + pa[i] * b_e12[i];
    }
}

}  // namespace refsplat
