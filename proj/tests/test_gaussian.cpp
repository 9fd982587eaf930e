#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "refsplat/error.hpp"

using namespace testutil;

namespace {

GaussianSet one_gaussian(const Eigen::Vector3d& mu, const Eigen::Vector3d& scale, const Eigen::Vector4d& q) {
    GaussianSet s;
    s.resize(1);
    for (int a = 0; a < 3; ++a) {
        s.positions[a] = mu[a];
        s.log_scales[a] = std::log(scale[a]);
    }
    for (int a = 0; a < 4; ++a) s.rotations[a] = q[a];
    return s;
}

}  // namespace

TEST_CASE("covariance_from examples") {
    const Eigen::Matrix3d id = covariance_from({1, 0, 0, 0}, {1, 1, 1});
    CHECK((id - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-15);

    // 90 degrees about z maps the x axis to y: S^2 = diag(4,1,1) becomes diag(1,4,1).
    const double h = std::sqrt(0.5);
    Eigen::Matrix3d r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Eigen::Matrix3d expected = r * Eigen::Vector3d(4, 1, 1).asDiagonal() * r.transpose();
    const Eigen::Matrix3d got = covariance_from({h, 0, 0, h}, {2, 1, 1});
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(got(1, 1) == doctest::Approx(4.0));
}

TEST_CASE("covariance eigenvalues are the squared scales and the matrix is exactly symmetric") {
    Rng rng(21);
    for (int t = 0; t < 50; ++t) {
        Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        q.normalize();
        const Eigen::Vector3d s(rng.uniform(0.1, 3), rng.uniform(0.1, 3), rng.uniform(0.1, 3));
        const Eigen::Matrix3d c = covariance_from(q, s);
        CHECK((c - c.transpose()).cwiseAbs().maxCoeff() == 0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(c);
        Eigen::Vector3d want = s.cwiseProduct(s);
        std::sort(want.data(), want.data() + 3);
        for (int a = 0; a < 3; ++a) CHECK(std::abs(es.eigenvalues()[a] - want[a]) < 1e-9);
    }
}

TEST_CASE("covariance_from rejects non-finite input") {
    CHECK_THROWS_AS(covariance_from({NAN, 0, 0, 0}, {1, 1, 1}), NumericError);
    CHECK_THROWS_AS(covariance_from({1, 0, 0, 0}, {1, INFINITY, 1}), NumericError);
}

TEST_CASE("activations") {
    CHECK(activate(0.0, Activation::beta_ref) == 0.5);
    CHECK(activate(0.0, Activation::scale) == 1.0);
    CHECK(activate(2.0, Activation::opacity_trans) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
    CHECK(activate(2.0, Activation::opacity_trans) == doctest::Approx(0.880797).epsilon(1e-6));
    for (Activation k : {Activation::opacity_trans, Activation::opacity_ref, Activation::beta_ref, Activation::scale})
        for (double x = -20.0; x < 20.0; x += 0.37) CHECK(activate(x, k) < activate(x + 0.37, k));
    CHECK(activate(-800.0, Activation::opacity_ref) >= 0.0);
    CHECK(activate(800.0, Activation::opacity_ref) <= 1.0);
}

TEST_CASE("projection examples") {
    Camera cam = front_camera(100, 100, 100.0);
    cam.cx = cam.cy = 0.0;
    auto on_axis = project_gaussian(one_gaussian({0, 0, 5}, {0.1, 0.1, 0.1}, {1, 0, 0, 0}), 0, cam);
    REQUIRE(on_axis);
    CHECK(on_axis->mean.x() == 0.0);
    CHECK(on_axis->mean.y() == 0.0);
    CHECK(on_axis->depth == 5.0);

    cam.cx = 50.0;
    auto off = project_gaussian(one_gaussian({1, 0, 5}, {0.1, 0.1, 0.1}, {1, 0, 0, 0}), 0, cam);
    REQUIRE(off);
    CHECK(off->mean.x() == doctest::Approx(70.0).epsilon(1e-14));
    CHECK(off->depth == 5.0);

    CHECK_FALSE(project_gaussian(one_gaussian({0, 0, -1}, {0.1, 0.1, 0.1}, {1, 0, 0, 0}), 0, cam));
}

TEST_CASE("screen covariance is the projected covariance plus dilation") {
    Rng rng(2);
    const Camera cam = look_at({0.3, -2.0, 0.5}, {0, 0, 0}, 40, 30, 35.0);
    for (int t = 0; t < 20; ++t) {
        Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        q.normalize();
        const Eigen::Vector3d mu(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
        const Eigen::Vector3d s(rng.uniform(0.02, 0.2), rng.uniform(0.02, 0.2), rng.uniform(0.02, 0.2));
        auto sp = project_gaussian(one_gaussian(mu, s, q), 0, cam);
        REQUIRE(sp);
        const Eigen::Vector3d t3 = cam.rotation * mu + cam.translation;
        Eigen::Matrix<double, 2, 3> j;
        j << cam.fx / t3.z(), 0, -cam.fx * t3.x() / (t3.z() * t3.z()), 0, cam.fy / t3.z(),
            -cam.fy * t3.y() / (t3.z() * t3.z());
        const Eigen::Matrix2d want = j * cam.rotation * covariance_from(q, s) * cam.rotation.transpose() * j.transpose() +
                                     kLowPassDilation * Eigen::Matrix2d::Identity();
        CHECK((sp->cov - want).cwiseAbs().maxCoeff() < 1e-9 * want.cwiseAbs().maxCoeff());
        CHECK(sp->mean.x() == doctest::Approx(cam.fx * t3.x() / t3.z() + cam.cx).epsilon(1e-12));
        CHECK(sp->cov.determinant() > 0.0);
    }
}

TEST_CASE("scaling every axis by c scales the undilated screen covariance by c^2") {
    const Camera cam = look_at({0, -3, 0}, {0, 0, 0}, 64, 64, 50.0);
    const Eigen::Vector4d q = Eigen::Vector4d(0.9, 0.2, -0.3, 0.1).normalized();
    const Eigen::Vector3d s(0.1, 0.05, 0.2);
    const double c = 2.5;
    auto a = project_gaussian(one_gaussian({0.1, 0, 0.2}, s, q), 0, cam);
    auto b = project_gaussian(one_gaussian({0.1, 0, 0.2}, c * s, q), 0, cam);
    REQUIRE(a);
    REQUIRE(b);
    const Eigen::Matrix2d dil = kLowPassDilation * Eigen::Matrix2d::Identity();
    const Eigen::Matrix2d want = c * c * (a->cov - dil);
    CHECK(((b->cov - dil) - want).cwiseAbs().maxCoeff() <= 1e-9 * want.cwiseAbs().maxCoeff());
}

TEST_CASE("depth along a camera ray is strictly ordered") {
    const Camera cam = look_at({1, -2, 0.5}, {0, 0, 0}, 32, 32, 30.0);
    const Eigen::Vector3d ray = (Eigen::Vector3d(0.1, 0.2, -0.1) - cam.center()).normalized();
    double last = 0.0;
    for (double t = 0.5; t < 6.0; t += 0.25) {
        auto sp = project_gaussian(one_gaussian(cam.center() + t * ray, {0.05, 0.05, 0.05}, {1, 0, 0, 0}), 0, cam);
        REQUIRE(sp);
        CHECK(sp->depth > last);
        last = sp->depth;
    }
}

TEST_CASE("camera validation") {
    Camera cam = front_camera(8, 8, 10.0);
    CHECK_NOTHROW(cam.validate());
    cam.fx = 0.0;
    CHECK_THROWS_AS(cam.validate(), ConfigError);
    cam = front_camera(8, 8, 10.0);
    cam.rotation(0, 0) = 1.1;
    CHECK_THROWS_AS(cam.validate(), ConfigError);
    cam = front_camera(8, 8, 10.0);
    cam.near = 0.0;
    CHECK_THROWS_AS(cam.validate(), ConfigError);
}

TEST_CASE("init_scene from a single point") {
    const std::vector<Eigen::Vector3d> pts{{0, 0, 0}};
    const std::vector<Rgb> cols{{1, 1, 1}};
    const GaussianSet s = init_scene(pts, cols);
    REQUIRE(s.size() == 1);
    CHECK(s.rotation(0) == Eigen::Vector4d(1, 0, 0, 0));
    CHECK(std::all_of(s.sh_ref.begin(), s.sh_ref.end(), [](double v) { return v == 0.0; }));
    CHECK(s.sh_trans[0] * kShC0 + 0.5 == doctest::Approx(1.0));
    CHECK(s.alpha_trans(0) == doctest::Approx(0.1));
    CHECK(s.alpha_ref(0) == doctest::Approx(0.1));
    CHECK(s.beta_ref(0) == doctest::Approx(0.05));
    CHECK_THROWS_AS(init_scene({}, {}), EmptySceneError);
}

TEST_CASE("init_scene scales from nearest neighbours") {
    // Collinear at 0, 1, 2: fewer than three neighbours exist, so each point
    // averages the two it has.
    const std::vector<Eigen::Vector3d> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    const std::vector<Rgb> cols(3, Rgb{0.5, 0.5, 0.5});
    const GaussianSet s = init_scene(pts, cols);
    CHECK(s.scale(1).x() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.scale(0).x() == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(s.scale(2).x() == doctest::Approx(1.5).epsilon(1e-15));

    // With more points, brute force over the three nearest.
    Rng rng(17);
    std::vector<Eigen::Vector3d> cloud;
    for (int i = 0; i < 60; ++i) cloud.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const GaussianSet c = init_scene(cloud, std::vector<Rgb>(cloud.size(), Rgb{0.2, 0.4, 0.6}));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < cloud.size(); ++j)
            if (j != i) d.push_back((cloud[i] - cloud[j]).norm());
        std::sort(d.begin(), d.end());
        const double want = (d[0] + d[1] + d[2]) / 3.0;
        CHECK(c.scale(i).x() == doctest::Approx(want).epsilon(1e-12));
        CHECK(c.log_scales[3 * i] == c.log_scales[3 * i + 2]);
    }
    CHECK(init_scene(cloud, std::vector<Rgb>(cloud.size(), Rgb{0.2, 0.4, 0.6})) == c);
}

TEST_CASE("append_copy, filter and with_sh_degree") {
    Rng rng(9);
    GaussianSet s = micro_scene(rng, 4, 3);
    GaussianSet t = s;
    t.append_copy(t, 2);
    REQUIRE(t.size() == 5);
    CHECK(t.position(4) == s.position(2));
    CHECK(t.raw_beta_ref[4] == s.raw_beta_ref[2]);

    t.filter({true, false, true, true, false});
    REQUIRE(t.size() == 3);
    CHECK(t.position(1) == s.position(2));

    const GaussianSet low = s.with_sh_degree(2);
    CHECK(low.sh_degree == 2);
    const GaussianSet back = low.with_sh_degree(kMaxShDegree);
    for (std::size_t i = 0; i < s.size(); ++i)
        for (int ch = 0; ch < 3; ++ch)
            for (int k = 0; k < back.sh_per_channel(); ++k) {
                const double v = back.sh_trans[i * back.sh_stride() + ch * back.sh_per_channel() + k];
                if (k < sh_coeff_count(2))
                    CHECK(v == s.sh_trans[i * s.sh_stride() + ch * s.sh_per_channel() + k]);
                else
                    CHECK(v == 0.0);
            }
}

TEST_CASE("normalize_rotations yields unit quaternions") {
    Rng rng(12);
    GaussianSet s = micro_scene(rng, 10, 0);
    for (double& v : s.rotations) v *= rng.uniform(0.2, 5.0);
    s.normalize_rotations();
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s.rotation(i).norm() - 1.0) < 1e-12);
}
