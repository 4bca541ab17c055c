#include <catch2/catch_amalgamated.hpp>

#include "relight/rng.hpp"
#include "relight/spectral.hpp"

#include "oracles.hpp"

using namespace relight;

TEST_CASE("fft2 single point is identity") {
    Tensor p({1, 1}, {5.0});
    ComplexGrid s = fft2(p);
    CHECK(s.at(0, 0).real() == Catch::Approx(5.0));
    CHECK(s.at(0, 0).imag() == Catch::Approx(0.0));
}

TEST_CASE("fft2 of a delta is flat") {
    Tensor p({2, 2}, {1.0, 0.0, 0.0, 0.0});
    ComplexGrid s = fft2(p);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            CHECK(s.at(r, c).real() == Catch::Approx(1.0));
            CHECK(s.at(r, c).imag() == Catch::Approx(0.0).margin(1e-12));
        }
}

TEST_CASE("fft2 matches the direct DFT oracle, mixed sizes") {
    int sizes[][2] = {{3, 5}, {7, 7}, {8, 6}, {12, 9}, {16, 16}, {1, 13}};
    for (auto [h, w] : sizes) {
        Rng rng = Rng::derive(41, static_cast<uint64_t>(h * 100 + w));
        Tensor p({h, w});
        std::vector<cplx> in(p.v.size());
        for (size_t i = 0; i < p.v.size(); ++i) {
            p.v[i] = rng.normal();
            in[i] = cplx(p.v[i], 0.0);
        }
        ComplexGrid s = fft2(p);
        auto ref = oracle::dft2(in, h, w, -1);
        double err = 0;
        for (size_t i = 0; i < ref.size(); ++i) err = std::max(err, std::abs(s.data[i] - ref[i]));
        CHECK(err < 1e-8);
    }
}

TEST_CASE("fft2/ifft2 round trip on random grids, sizes 1..33") {
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Rng rng = Rng::derive(7, static_cast<uint64_t>(trial));
        int h = 1 + rng.index(33), w = 1 + rng.index(33);
        ComplexGrid g(h, w);
        for (auto& z : g.data) z = cplx(rng.normal(), rng.normal());
        ComplexGrid back = ifft2(fft2(g));
        for (size_t i = 0; i < g.data.size(); ++i)
            worst = std::max(worst, std::abs(back.data[i] - g.data[i]));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("Parseval") {
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng = Rng::derive(11, static_cast<uint64_t>(trial));
        int h = 2 + rng.index(20), w = 2 + rng.index(20);
        Tensor p({h, w});
        for (auto& x : p.v) x = rng.normal();
        ComplexGrid s = fft2(p);
        double e_pix = 0, e_spec = 0;
        for (double x : p.v) e_pix += x * x;
        for (auto& z : s.data) e_spec += std::norm(z);
        e_spec /= static_cast<double>(h) * w;
        CHECK(std::abs(e_pix - e_spec) <= 1e-6 * e_pix);
    }
}

TEST_CASE("fft2 rejects empty planes") {
    CHECK_THROWS_AS(ComplexGrid(0, 4), DimensionError);
}

TEST_CASE("gaussian_lowpass_map values") {
    SECTION("center is 1") {
        auto f = gaussian_lowpass_map(9, 13, 2.5);
        CHECK(f.map(4, 6) == 1.0);
    }
    SECTION("value at radial distance sigma") {
        auto f = gaussian_lowpass_map(17, 17, 3.0);
        CHECK(f.map(8 + 3, 8) == Catch::Approx(std::exp(-0.5)));
        CHECK(f.map(8, 8 - 3) == Catch::Approx(std::exp(-0.5)));
    }
    SECTION("wide-filter limit") {
        auto f = gaussian_lowpass_map(8, 8, 1e9);
        for (double x : f.map.v) CHECK(x == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("sigma must be positive") {
        CHECK_THROWS_AS(gaussian_lowpass_map(8, 8, 0.0), ParameterError);
        CHECK_THROWS_AS(gaussian_lowpass_map(8, 8, -1.0), ParameterError);
    }
    SECTION("reflection symmetry for odd dims") {
        auto f = gaussian_lowpass_map(9, 11, 1.7);
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 11; ++c) {
                CHECK(f.map(r, c) == Catch::Approx(f.map(8 - r, c)));
                CHECK(f.map(r, c) == Catch::Approx(f.map(r, 10 - c)));
            }
    }
    SECTION("radially non-increasing from center") {
        auto f = gaussian_lowpass_map(12, 12, 2.0);
        // along each axis through the center
        for (int c = 6; c + 1 < 12; ++c) CHECK(f.map(6, c + 1) <= f.map(6, c));
        for (int r = 6; r + 1 < 12; ++r) CHECK(f.map(r + 1, 6) <= f.map(r, 6));
    }
}

TEST_CASE("low_freq_enhance zero weights is the identity") {
    Rng rng(123);
    FeatureGrid fb = make_image(6, 7, 3);
    for (auto& x : fb.v) x = rng.normal();
    auto filt = gaussian_lowpass_map(6, 7, 2.0);
    auto out = low_freq_enhance(fb, filt, zero_enhance_params(3));
    CHECK(max_abs_diff(out, fb) <= 1e-12);
}

TEST_CASE("low_freq_enhance matches a dense brute-force reference") {
    // reference built from the direct DFT oracle, same conv weights
    int h = 5, w = 6, d = 2;
    Rng rng(77);
    FeatureGrid fb = make_image(h, w, d);
    for (auto& x : fb.v) x = rng.normal() * 0.3 + 0.5;
    auto filt = gaussian_lowpass_map(h, w, 1.5);
    EnhanceParams p = zero_enhance_params(d);
    for (auto& x : p.weight.v) x = 0.2 * rng.normal();
    for (auto& x : p.bias.v) x = 0.05 * rng.normal();

    auto out = low_freq_enhance(fb, filt, p);

    // oracle path
    FeatureGrid ref = fb;
    std::vector<std::vector<cplx>> spec(static_cast<size_t>(d));
    for (int ch = 0; ch < d; ++ch) {
        std::vector<cplx> plane(static_cast<size_t>(h) * w);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) plane[static_cast<size_t>(r) * w + c] = fb(r, c, ch);
        spec[ch] = oracle::dft2(plane, h, w, -1);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                spec[ch][static_cast<size_t>(r) * w + c] *= filter_at(filt, r, c);
    }
    for (int ch = 0; ch < d; ++ch) {
        std::vector<cplx> mixed(static_cast<size_t>(h) * w);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                size_t idx = static_cast<size_t>(r) * w + c;
                double re = p.bias(ch), im = p.bias(d + ch);
                for (int i = 0; i < d; ++i) {
                    re += spec[i][idx].real() * p.weight(i, ch) + spec[i][idx].imag() * p.weight(d + i, ch);
                    im += spec[i][idx].real() * p.weight(i, d + ch) + spec[i][idx].imag() * p.weight(d + i, d + ch);
                }
                mixed[idx] = cplx(std::max(0.0, re), std::max(0.0, im));
            }
        auto rec = oracle::dft2(mixed, h, w, +1);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) ref(r, c, ch) += rec[static_cast<size_t>(r) * w + c].real();
    }
    CHECK(max_abs_diff(out, ref) < 1e-8);
}

TEST_CASE("low_freq_enhance on a zero-mean checkerboard with tiny sigma") {
    // A ±1 checkerboard has no DC energy; sigma = 0.1 kills everything else,
    // so with zero bias the output returns to the input.
    int h = 8, w = 8, d = 2;
    FeatureGrid fb = make_image(h, w, d);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int k = 0; k < d; ++k) fb(r, c, k) = ((r + c) % 2 == 0) ? 1.0 : -1.0;
    auto filt = gaussian_lowpass_map(h, w, 0.1);

    // energy accounting: every non-DC coefficient is attenuated by >= 1-1e-6
    Tensor plane({h, w});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) plane(r, c) = fb(r, c, 0);
    ComplexGrid s = fft2(plane);
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v)
            if (!(u == 0 && v == 0)) CHECK(filter_at(filt, u, v) <= 1e-6);

    EnhanceParams p = zero_enhance_params(d);
    Rng rng(5);
    for (auto& x : p.weight.v) x = rng.normal();
    auto out = low_freq_enhance(fb, filt, p);
    CHECK(max_abs_diff(out, fb) < 1e-8);
}

TEST_CASE("low_freq_enhance shape mismatch") {
    FeatureGrid fb = make_image(4, 4, 2);
    auto filt = gaussian_lowpass_map(4, 5, 1.0);
    CHECK_THROWS_AS(low_freq_enhance(fb, filt, zero_enhance_params(2)), DimensionError);
}

TEST_CASE("haar_analyze constant image") {
    ImageBuffer img = make_image(6, 6, 3, 0.5);
    auto s = haar_analyze(img);
    for (double x : s.hq.v) CHECK(x == Catch::Approx(0.0).margin(1e-15));
    CHECK(max_abs_diff(s.lq, img) <= 1e-15);
}

TEST_CASE("haar_analyze 2x2 hand case") {
    ImageBuffer img = make_image(2, 2, 1);
    img(0, 0, 0) = 1.0;
    auto s = haar_analyze(img);
    for (double x : s.lq.v) CHECK(x == Catch::Approx(0.25));
    CHECK(s.hq(0, 0, 0) == Catch::Approx(0.75));
    CHECK(s.hq(0, 1, 0) == Catch::Approx(-0.25));
}

TEST_CASE("haar split is additive, including odd dims") {
    for (auto [h, w] : {std::pair{64, 64}, {7, 9}, {1, 5}, {8, 3}}) {
        Rng rng = Rng::derive(99, static_cast<uint64_t>(h * 100 + w));
        ImageBuffer img = make_image(h, w, 3);
        for (auto& x : img.v) x = rng.uniform();
        auto s = haar_analyze(img);
        CHECK(max_abs_diff(haar_synthesize(s), img) <= 1e-6);
    }
}
