#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <sugarct/sugarct.hpp>

using namespace sugarct;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name)
{
    const fs::path d = fs::temp_directory_path() / ("sugarct_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// The same closed-form images are fed to scikit-image to produce the SSIM references.
Image analytic_reference(std::size_t n)
{
    Image x(n, 1.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            x(r, c) = 0.5 + 0.3 * std::sin(0.3 * static_cast<double>(r)) * std::cos(0.2 * static_cast<double>(c));
    return x;
}

} // namespace

TEST(SheppLogan, RangeAndEmptyCorners)
{
    const Image x = shepp_logan(128);
    EXPECT_GE(vec::min_value(x.data.span()), 0.0);
    EXPECT_LE(vec::max_value(x.data.span()), 1.0);
    EXPECT_DOUBLE_EQ(vec::max_value(x.data.span()), 1.0);
    for (auto [r, c] : {std::pair{0, 0}, {0, 127}, {127, 0}, {127, 127}}) EXPECT_EQ(x(r, c), 0.0);
}

TEST(SheppLogan, RasterizerIsMirrorExact)
{
    // the table minus its left/right-unpaired entries (the two lateral ellipses and the
    // small lower inserts) is a mirror-symmetric phantom
    std::vector<Ellipse> sym;
    for (std::size_t i : {0, 1, 4, 5, 6, 8}) sym.push_back(shepp_logan_ellipses()[i]);
    const std::size_t n = 64;
    const Grid x = render_ellipses(sym, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) EXPECT_EQ(x(r, c), x(r, n - 1 - c));
    const Image full = shepp_logan(n);
    for (std::size_t r = 0; r < n / 4; ++r)
        for (std::size_t c = 0; c < n; ++c) EXPECT_EQ(full(r, c), full(r, n - 1 - c));
}

TEST(SheppLogan, ResolutionConsistency)
{
    const Image lo = shepp_logan(64);
    const Image hi = block_average(shepp_logan(128), 2);
    EXPECT_LT(std::sqrt(mse(lo, Image(hi.data, lo.pixel_size_mm))), 0.02);
}

TEST(RandomPhantom, DeterministicPerSeed)
{
    PhantomSpec s;
    s.seed = 42;
    const Image a = make_phantom(s), b = make_phantom(s);
    EXPECT_EQ(a, b);
    s.seed = 43;
    EXPECT_NE(a, make_phantom(s));
}

TEST(RandomPhantom, NoEllipsesGivesZero)
{
    PhantomSpec s;
    s.n_ellipses = 0;
    for (double v : make_phantom(s).data.values) EXPECT_EQ(v, 0.0);
}

TEST(RandomPhantom, SupportFractionBounded)
{
    PhantomSpec s;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        s.seed = seed;
        const Image x = make_phantom(s);
        std::size_t support = 0;
        for (double v : x.data.values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
            support += v > 0.0;
        }
        const double frac = static_cast<double>(support) / static_cast<double>(x.data.size());
        EXPECT_GT(frac, 0.01) << seed;
        EXPECT_LT(frac, 0.95) << seed;
    }
}

TEST(RandomPhantom, Validation)
{
    PhantomSpec s;
    s.n = 8;
    EXPECT_THROW(make_phantom(s), InvalidArgument);
    s = {};
    s.intensity_min = 0.7;
    s.intensity_max = 0.2;
    EXPECT_THROW(make_phantom(s), InvalidArgument);
    EXPECT_THROW(parse_phantom_kind("cube"), InvalidArgument);
    EXPECT_EQ(parse_phantom_kind("shepp-logan"), PhantomKind::shepp_logan);
}

TEST(BlockAverage, PreservesMeanAndScalesPixel)
{
    const Image x = random_image(32, 0.5, 3);
    const Image y = block_average(x, 4);
    EXPECT_EQ(y.n(), 8u);
    EXPECT_DOUBLE_EQ(y.pixel_size_mm, 2.0);
    double sx = 0.0, sy = 0.0;
    for (double v : x.data.values) sx += v;
    for (double v : y.data.values) sy += v;
    EXPECT_NEAR(sx / 1024.0, sy / 64.0, 1e-12);
    EXPECT_THROW(block_average(x, 3), InvalidArgument);
}

TEST(Noise, ZeroGaussianLevelIsIdentity)
{
    const Sinogram s(Grid(20, 30, 1.5));
    EXPECT_EQ(add_noise(s, NoiseKind::gaussian, 0.0, 1).sinogram, s);
}

TEST(Noise, SeededAndCalibrated)
{
    const Sinogram s(200, 200, 2.0);
    const auto a = add_noise(s, NoiseKind::gaussian, 0.1, 5);
    EXPECT_EQ(a.sinogram, add_noise(s, NoiseKind::gaussian, 0.1, 5).sinogram);
    EXPECT_NE(a.sinogram, add_noise(s, NoiseKind::gaussian, 0.1, 6).sinogram);
    double m = 0.0, v = 0.0;
    for (double e : a.sinogram.data.values) m += e - 2.0;
    m /= 40000.0;
    for (double e : a.sinogram.data.values) v += (e - 2.0 - m) * (e - 2.0 - m);
    EXPECT_NEAR(std::sqrt(v / 40000.0), 0.1, 0.002);
    EXPECT_NEAR(m, 0.0, 0.002);
}

TEST(Noise, PoissonCounts)
{
    const Sinogram s(100, 100, 1.0);
    const auto r = add_noise(s, NoiseKind::poisson_counts, 1e5, 3);
    EXPECT_EQ(r.clamped, 0u);
    double m = 0.0;
    for (double e : r.sinogram.data.values) m += e;
    EXPECT_NEAR(m / 1e4, 1.0, 1e-3);

    const auto starved = add_noise(Sinogram(10, 10, 30.0), NoiseKind::poisson_counts, 1.0, 3);
    EXPECT_EQ(starved.clamped, 100u);
    for (double e : starved.sinogram.data.values) EXPECT_EQ(e, 0.0);

    EXPECT_THROW(add_noise(s, NoiseKind::poisson_counts, 0.0, 1), InvalidArgument);
    EXPECT_THROW(add_noise(s, NoiseKind::gaussian, -1.0, 1), InvalidArgument);
    EXPECT_EQ(parse_noise_kind("poisson-counts"), NoiseKind::poisson_counts);
    EXPECT_THROW(parse_noise_kind("speckle"), InvalidArgument);
}

TEST(Metrics, Psnr)
{
    const Image ref(16, 1.0, 1.0);
    EXPECT_EQ(psnr(ref, ref), kPsnrCapDb);
    EXPECT_NEAR(psnr(Image(16, 1.0, 0.9), ref), 20.0, 1e-12);
    Image half = ref;
    for (double& v : half.data.values) v = 0.5;
    EXPECT_NEAR(psnr(half, ref), 20.0 * std::log10(2.0), 1e-12);
    Image peak2(16, 1.0, 2.0);
    EXPECT_NEAR(psnr(Image(16, 1.0, 1.9), peak2), 26.020599913279625, 1e-10);
    EXPECT_THROW(psnr(Image(8, 1.0), ref), InvalidArgument);
}

TEST(Metrics, SsimIdentityAndShift)
{
    const Image ref = analytic_reference(32);
    EXPECT_NEAR(ssim(ref, ref), 1.0, 1e-12);
    Image shifted = ref;
    for (std::size_t r = 0; r < 32; ++r)
        for (std::size_t c = 1; c < 32; ++c) shifted(r, c) = ref(r, c - 1);
    EXPECT_LT(ssim(shifted, ref), 1.0);
    EXPECT_THROW(ssim(Image(8, 1.0), Image(8, 1.0)), InvalidArgument);
}

TEST(Metrics, SsimMatchesScikitImage)
{
    const Image ref = analytic_reference(32);
    Image x = ref, y = ref;
    for (std::size_t r = 0; r < 32; ++r)
        for (std::size_t c = 0; c < 32; ++c) {
            x(r, c) += 0.05 * std::cos(0.7 * static_cast<double>(r) + 1.3 * static_cast<double>(c));
            y(r, c) = 0.8 * ref(r, c) + 0.1;
        }
    // skimage.metrics.structural_similarity(gaussian_weights=True, sigma=1.5,
    // use_sample_covariance=False, data_range=ref.max() - ref.min())
    EXPECT_NEAR(ssim(x, ref), 0.8778863198105448, 1e-10);
    EXPECT_NEAR(ssim(y, ref), 0.9750248841590773, 1e-10);
}

TEST(ImageIo, RoundTripIsBitExact)
{
    const auto d = temp_dir("io_roundtrip");
    Image x = random_image(17 + 15, 0.37, 1);
    x(0, 0) = -0.0;
    x(1, 1) = 1e-310;
    save_image(d / "x.sgim", x);
    const Image back = load_image(d / "x.sgim");
    EXPECT_EQ(std::memcmp(back.data.values.data(), x.data.values.data(), 8 * x.data.size()), 0);
    EXPECT_EQ(back.pixel_size_mm, 0.37);

    const auto g = make_desk_geometry(32, 7, 151.875);
    const Sinogram s = forward_project(x, g);
    save_sinogram(d / "y.sgsn", s, g);
    const auto ls = load_sinogram_with_geometry(d / "y.sgsn");
    EXPECT_EQ(ls.sinogram, s);
    ASSERT_TRUE(ls.geometry.has_value());
    EXPECT_EQ(ls.geometry->view_angles_rad, g.view_angles_rad);
    EXPECT_EQ(ls.geometry->n_detectors, g.n_detectors);
}

TEST(ImageIo, CorruptFilesRejected)
{
    const auto d = temp_dir("io_corrupt");
    const Image x = random_image(16, 1.0, 2);
    save_image(d / "x.sgim", x);

    EXPECT_THROW(load_sinogram(d / "x.sgim"), FormatError); // wrong magic

    auto bytes = [&](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::vector<char>(std::istreambuf_iterator<char>(in), {});
    };
    auto put = [&](const fs::path& p, const std::vector<char>& b) {
        std::ofstream(p, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    };
    const auto good = bytes(d / "x.sgim");

    auto b = good;
    b[8] = 17; // rows
    put(d / "x.sgim", b);
    EXPECT_THROW(load_image(d / "x.sgim"), FormatError);

    b = good;
    b[40] ^= 0x01;
    put(d / "x.sgim", b);
    EXPECT_THROW(load_image(d / "x.sgim"), FormatError);

    b = good;
    b.resize(b.size() - 8);
    put(d / "x.sgim", b);
    EXPECT_THROW(load_image(d / "x.sgim"), FormatError);

    put(d / "x.sgim", good);
    EXPECT_NO_THROW(load_image(d / "x.sgim"));
    fs::remove(d / "x.sgim.json");
    EXPECT_THROW(load_image(d / "x.sgim"), FormatError);
    EXPECT_THROW(load_image(d / "missing.sgim"), FormatError);
}

TEST(ImageIo, PngExport)
{
    const auto d = temp_dir("png");
    export_png(d / "sub" / "x.png", shepp_logan(32).data, 0.0, 1.0);
    std::ifstream in(d / "sub" / "x.png", std::ios::binary);
    char sig[8]{};
    in.read(sig, 8);
    EXPECT_EQ(std::string(sig + 1, 3), "PNG");
    EXPECT_THROW(export_png(d / "y.png", shepp_logan(32).data, 1.0, 1.0), InvalidArgument);
}

TEST(ParamsIo, RoundTrip)
{
    const auto d = temp_dir("params");
    const auto g = make_desk_geometry(32, 12, 151.875);
    for (bool shared : {false, true}) {
        SugarArchitecture arch;
        arch.n_blocks = 3;
        arch.network = {4, 2};
        arch.shared_network = shared;
        arch.use_threshold = true;
        SugarInitOptions opt;
        opt.zero_output = false;
        auto p = init_sugar_params<float>(g, arch, opt);
        p.threshold(2) = 0.125f;
        save_params(d / "p.sugr", p);
        const auto back = load_params(d / "p.sugr");
        EXPECT_EQ(back.arch, arch);
        EXPECT_EQ(back.cast<float>().values, p.values);
    }
    SugarArchitecture haar;
    haar.dm = DmKind::haar;
    haar.n_blocks = 2;
    SugarParams<double> h(haar);
    h.a(1) = 0.5;
    save_params(d / "h.sugr", h);
    EXPECT_EQ(load_params(d / "h.sugr").values, h.values);

    std::ofstream(d / "bad.sugr") << "SUGX";
    EXPECT_THROW(load_params(d / "bad.sugr"), FormatError);
}

TEST(Corpus, DeterministicAndSplit)
{
    const auto g = make_desk_geometry(32, 8, 151.875);
    CorpusSpec spec;
    spec.n_train = 3;
    spec.n_test = 2;
    spec.seed = 11;
    spec.noise = {true, NoiseKind::gaussian, 0.01};
    const Corpus a = make_corpus(g, spec), b = make_corpus(g, spec);
    ASSERT_EQ(a.train.size(), 3u);
    ASSERT_EQ(a.test.size(), 2u);
    EXPECT_EQ(a.test[1].y, b.test[1].y);
    EXPECT_NE(a.train[0].truth, a.train[1].truth);
    EXPECT_GT(norm2(a.train[0].y - forward_project(a.train[0].truth, g)), 0.0);
}
