#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include <sugarct/fbp.hpp>
#include <sugarct/metrics.hpp>
#include <sugarct/operators.hpp>
#include <sugarct/phantom.hpp>
#include <sugarct/projector.hpp>

using namespace sugarct;

namespace {

Sinogram random_sinogram(const FanBeamGeometry& g, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Sinogram s(g.n_views(), g.n_detectors);
    for (double& v : s.data.values) v = u(rng);
    return s;
}

Image disk(std::size_t n, double pixel_mm, double radius_norm, double mu)
{
    const std::vector<Ellipse> e{{mu, radius_norm, radius_norm, 0.0, 0.0, 0.0}};
    return Image(render_ellipses(e, n), pixel_mm);
}

} // namespace

TEST(ForwardProject, ZeroImageGivesZeroSinogram)
{
    const auto g = make_desk_geometry(32, 12, 151.875);
    const Sinogram s = forward_project(Image(32, g.pixel_size_mm), g);
    EXPECT_EQ(s.n_views(), 12u);
    EXPECT_EQ(s.n_detectors(), g.n_detectors);
    for (double v : s.data.values) EXPECT_EQ(v, 0.0);
}

TEST(ForwardProject, Linearity)
{
    const auto g = make_desk_geometry(32, 20, 360.0);
    const Image a = random_image(32, g.pixel_size_mm, 1), b = random_image(32, g.pixel_size_mm, 2);
    const double alpha = 0.7, beta = -1.9;
    const Sinogram lhs = forward_project(alpha * a + beta * b, g);
    const Sinogram rhs = alpha * forward_project(a, g) + beta * forward_project(b, g);
    EXPECT_LT(norm2(lhs - rhs), 1e-10 * norm2(rhs));
}

TEST(ForwardProject, ChordThroughCentredDisk)
{
    // line integral along the central ray of a disk of radius r is 2 r mu
    const std::size_t n = 256;
    const auto g = make_desk_geometry(n, 4, 360.0);
    const double mu = 0.02;
    const Image x = disk(n, g.pixel_size_mm, 0.5, mu);
    const Sinogram s = forward_project(x, g);
    const double r_mm = 0.5 * g.fov_radius_mm();
    const std::size_t c = g.n_detectors / 2;
    for (std::size_t v = 0; v < g.n_views(); ++v) {
        const double central = g.n_detectors % 2 ? s(v, c) : 0.5 * (s(v, c - 1) + s(v, c));
        EXPECT_NEAR(central, 2.0 * r_mm * mu, 0.02 * 2.0 * r_mm * mu) << "view " << v;
    }
}

TEST(Backproject, AdjointIdentity)
{
    const auto g = make_desk_geometry(64, 36, 151.875);
    for (std::uint64_t k = 0; k < 20; ++k) {
        const Image x = random_image(64, g.pixel_size_mm, 100 + k);
        const Sinogram y = random_sinogram(g, 200 + k);
        const Sinogram ax = forward_project(x, g);
        const double lhs = dot(ax, y), rhs = dot(x, backproject(y, g));
        EXPECT_LT(std::abs(lhs - rhs) / (norm2(ax) * norm2(y)), 1e-4);
    }
}

TEST(Backproject, ZeroAndPositivity)
{
    const auto g = make_desk_geometry(32, 90, 360.0);
    const Image z = backproject(Sinogram(g.n_views(), g.n_detectors), g);
    for (double v : z.data.values) EXPECT_EQ(v, 0.0);
    const Image b = backproject(Sinogram(g.n_views(), g.n_detectors, 1.0), g);
    const double half = 15.5;
    for (std::size_t r = 0; r < 32; ++r)
        for (std::size_t c = 0; c < 32; ++c) {
            const double dr = static_cast<double>(r) - half, dc = static_cast<double>(c) - half;
            if (dr * dr + dc * dc < 14.0 * 14.0) {
                EXPECT_GT(b(r, c), 0.0);
            }
        }
}

TEST(Projector, CachedOperatorMatchesDirectTraversal)
{
    const auto g = make_desk_geometry(48, 20, 151.875);
    const FanBeamProjector A(g);
    const Image x = random_image(48, g.pixel_size_mm, 5);
    const Sinogram y = random_sinogram(g, 6);
    EXPECT_LT(norm2(A.apply(x) - forward_project(x, g)), 1e-12 * norm2(forward_project(x, g)));
    EXPECT_LT(norm2(A.adjoint(y) - backproject(y, g)), 1e-12 * norm2(backproject(y, g)));
}

TEST(Projector, ShapeMismatchThrows)
{
    const auto g = make_desk_geometry(32, 12, 151.875);
    EXPECT_THROW(forward_project(Image(16, 1.0), g), InvalidArgument);
    EXPECT_THROW(backproject(Sinogram(11, g.n_detectors), g), InvalidArgument);
}

TEST(Projector, Deterministic)
{
    const auto g = make_desk_geometry(32, 12, 151.875);
    const Image x = random_image(32, g.pixel_size_mm, 9);
    EXPECT_EQ(forward_project(x, g), forward_project(x, g));
}

TEST(Fbp, ZeroSinogramGivesZeroImage)
{
    const auto g = make_desk_geometry(32, 36, 151.875);
    const Image x = fbp(Sinogram(g.n_views(), g.n_detectors), g);
    for (double v : x.data.values) EXPECT_EQ(v, 0.0);
}

TEST(Fbp, FullScanSheppLogan)
{
    const auto g = make_desk_geometry(128, 360, 360.0);
    const Image x = shepp_logan(128, g.pixel_size_mm);
    const Image r = fbp(forward_project(x, g), g, FilterKind::ramp);
    EXPECT_GT(psnr(r, x), 30.0);
}

TEST(Fbp, FewViewLimitedAngleIsWorse)
{
    const Image x = shepp_logan(128, 0.9);
    const auto full = make_desk_geometry(128, 360, 360.0);
    const auto few = make_desk_geometry(128, 36, 151.875);
    const double p_full = psnr(fbp(forward_project(x, full), full), x);
    const double p_few = psnr(fbp(forward_project(x, few), few), x);
    EXPECT_LT(p_few, p_full);
}

TEST(Fbp, RecoversDiskValue)
{
    const auto g = make_desk_geometry(128, 720, 360.0);
    const Image x = disk(128, g.pixel_size_mm, 0.5, 1.0);
    const Image r = fbp(forward_project(x, g), g);
    EXPECT_NEAR(r(64, 64), 1.0, 0.02);
    EXPECT_NEAR(r(64, 80), 1.0, 0.02);
    EXPECT_NEAR(r(64, 12), 0.0, 0.02);
}

TEST(Fbp, NeedsTwoViews)
{
    const auto g = make_desk_geometry(32, 1, 180.0);
    EXPECT_THROW(fbp(Sinogram(1, g.n_detectors), g), InvalidArgument);
}

TEST(Fbp, TransposeIsExact)
{
    for (FilterKind k : {FilterKind::ramp, FilterKind::hann}) {
        const auto g = make_desk_geometry(32, 18, 151.875);
        const FbpOperator F(g, k);
        for (std::uint64_t s = 0; s < 5; ++s) {
            const Sinogram y = random_sinogram(g, 40 + s);
            const Image x = random_image(32, g.pixel_size_mm, 50 + s);
            const Image fy = F.apply(y);
            const Sinogram ftx = F.transpose(x);
            EXPECT_LT(std::abs(dot(fy, x) - dot(y, ftx)), 1e-10 * norm2(fy) * norm2(x));
        }
    }
}

TEST(Fbp, HannSmoothsMoreThanRamp)
{
    const auto g = make_desk_geometry(64, 180, 360.0);
    const FbpOperator ramp(g, FilterKind::ramp), hann(g, FilterKind::hann);
    const auto& rr = ramp.response();
    const auto& rh = hann.response();
    ASSERT_EQ(rr.size(), rh.size());
    EXPECT_NEAR(rh.front(), rr.front(), 1e-15);
    EXPECT_LT(std::abs(rh.back()), 1e-12 * std::abs(rr.back()) + 1e-300);
}

TEST(Fbp, ParseFilterKind)
{
    EXPECT_EQ(parse_filter_kind("ramp"), FilterKind::ramp);
    EXPECT_EQ(parse_filter_kind("hann"), FilterKind::hann);
    EXPECT_THROW(parse_filter_kind("shepp"), InvalidArgument);
}
