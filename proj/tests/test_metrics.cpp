#include <catch2/catch_amalgamated.hpp>

#include "relight/metrics.hpp"
#include "relight/rng.hpp"
#include "relight/synth.hpp"

#include "oracles.hpp"

using namespace relight;

namespace {

ImageBuffer random_image(int h, int w, uint64_t seed) {
    ImageBuffer img = make_image(h, w, 3);
    Rng rng(seed);
    for (auto& v : img.v) v = rng.uniform();
    return img;
}

} // namespace

TEST_CASE("psnr of identical images hits the cap") {
    ImageBuffer a = random_image(9, 13, 1);
    CHECK(psnr(a, a) == kPsnrCap);
}

TEST_CASE("psnr of a uniform 0.1 offset is exactly 20 dB") {
    ImageBuffer a = make_image(8, 8, 3);
    ImageBuffer b = a;
    for (auto& v : b.v) v += 0.1;
    CHECK(psnr(a, b) == Catch::Approx(20.0).margin(1e-10));
}

TEST_CASE("psnr matches a directly computed reference") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        ImageBuffer a = random_image(11, 7, seed);
        ImageBuffer b = random_image(11, 7, seed + 100);
        double mse = 0;
        for (size_t i = 0; i < a.v.size(); ++i) {
            double d = a.v[i] - b.v[i];
            mse += d * d;
        }
        mse /= static_cast<double>(a.v.size());
        double want = 10.0 * std::log10(1.0 / mse);
        CHECK(psnr(a, b) == Catch::Approx(want).margin(1e-8));
    }
}

TEST_CASE("psnr rejects shape mismatch") {
    CHECK_THROWS_AS(psnr(make_image(4, 4, 3), make_image(4, 5, 3)), DimensionError);
}

TEST_CASE("ssim of identical images is 1") {
    ImageBuffer a = random_image(12, 12, 3);
    CHECK(ssim(a, a) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("ssim of constant 0 vs constant 1 matches the closed form") {
    ImageBuffer a = make_image(10, 10, 3);
    ImageBuffer b = a;
    for (auto& v : b.v) v = 1.0;
    // means 0 and 1, variances 0: ssim = C1*C2 / ((1 + C1) * C2)
    double want = (kSsimC1 * kSsimC2) / ((1.0 + kSsimC1) * kSsimC2);
    CHECK(ssim(a, b) == Catch::Approx(want).margin(1e-12));
}

TEST_CASE("ssim matches the per-window oracle") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        ImageBuffer a = random_image(14, 9, seed);
        ImageBuffer b = random_image(14, 9, seed + 50);
        CHECK(ssim(a, b) == Catch::Approx(oracle::ssim(a, b, kSsimWindow, kSsimC1, kSsimC2)).margin(1e-8));
    }
}

TEST_CASE("ssim penalizes noise more than psnr-equivalent blur would suggest") {
    ImageBuffer a = random_image(16, 16, 4);
    ImageBuffer b = a;
    Rng rng(77);
    for (auto& v : b.v) v = clamp01(v + rng.normal() * 0.2);
    CHECK(ssim(a, b) < 1.0);
    CHECK(ssim(a, b) > -1.0);
}

TEST_CASE("ssim rejects images smaller than the window") {
    CHECK_THROWS_AS(ssim(make_image(6, 6, 3), make_image(6, 6, 3)), ParameterError);
}

TEST_CASE("directional consistency is positive for a correctly lit sphere") {
    SceneSpec spec;
    spec.radius = 0.6;
    spec.light_dir = bucket_light_dir(0); // from the left
    RelightSample s = render_scene(spec, 32, 32);
    CHECK(directional_consistency(s.target, s.fg_mask, spec.light_dir) > 0.0);
    // lighting flipped relative to the claimed direction scores negative
    auto flipped = spec.light_dir;
    flipped[0] = -flipped[0];
    flipped[1] = -flipped[1];
    CHECK(directional_consistency(s.target, s.fg_mask, flipped) < 0.0);
}

TEST_CASE("directional consistency of a uniform foreground is ~0") {
    ImageBuffer img = make_image(16, 16, 3);
    for (auto& v : img.v) v = 0.5;
    Tensor mask = make_mask(16, 16);
    for (int r = 4; r < 12; ++r)
        for (int c = 4; c < 12; ++c) mask(r, c) = 1.0;
    CHECK(std::abs(directional_consistency(img, mask, bucket_light_dir(1))) < 1e-9);
}

TEST_CASE("directional consistency is invariant to uniform intensity scaling") {
    SceneSpec spec;
    spec.radius = 0.55;
    spec.light_dir = bucket_light_dir(3);
    RelightSample s = render_scene(spec, 24, 24);
    ImageBuffer scaled = s.target;
    for (auto& v : scaled.v) v *= 0.5;
    double d0 = directional_consistency(s.target, s.fg_mask, spec.light_dir);
    double d1 = directional_consistency(scaled, s.fg_mask, spec.light_dir);
    CHECK(d0 == Catch::Approx(d1).margin(1e-5));
}

TEST_CASE("directional consistency input validation") {
    ImageBuffer img = make_image(8, 8, 3);
    Tensor empty_mask = make_mask(8, 8);
    CHECK_THROWS_AS(directional_consistency(img, empty_mask, bucket_light_dir(0)),
                    ParameterError);
    Tensor mask = make_mask(8, 8);
    mask(4, 4) = 1.0;
    std::array<double, 3> frontal = {0.0, 0.0, 1.0};
    CHECK_THROWS_AS(directional_consistency(img, mask, frontal), ParameterError);
}
