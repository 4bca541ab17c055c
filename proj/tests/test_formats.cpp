#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "relight/checkpoint.hpp"
#include "relight/config.hpp"
#include "relight/image.hpp"
#include "relight/rng.hpp"

using namespace relight;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const std::string& name) {
    return fs::temp_directory_path() / name;
}

} // namespace

TEST_CASE("checkpoint round trip preserves names, shapes and f32 values") {
    ad::ParamStore ps;
    Rng rng(42);
    Tensor w({3, 3, 2, 4});
    for (auto& v : w.v) v = rng.normal();
    Tensor b({4});
    for (auto& v : b.v) v = rng.uniform(-1, 1);
    ps.add("net.w", w);
    ps.add("net.b", b);

    fs::path p = tmp_file("relight_ckpt_test.dlkt");
    save_checkpoint(p.string(), ps);
    ad::ParamStore back = load_checkpoint(p.string());

    REQUIRE(back.has("net.w"));
    REQUIRE(back.has("net.b"));
    CHECK(back.at("net.w").value.shape == w.shape);
    CHECK(back.at("net.b").value.shape == b.shape);
    for (size_t i = 0; i < w.v.size(); ++i)
        CHECK(back.at("net.w").value.v[i] ==
              static_cast<double>(static_cast<float>(w.v[i])));
    fs::remove(p);
}

TEST_CASE("checkpoint save then load twice is byte-identical") {
    ad::ParamStore ps;
    ps.add("a", Tensor::full({2, 2}, 0.25));
    fs::path p1 = tmp_file("relight_ckpt_a.dlkt");
    fs::path p2 = tmp_file("relight_ckpt_b.dlkt");
    save_checkpoint(p1.string(), ps);
    save_checkpoint(p2.string(), load_checkpoint(p1.string()));
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("checkpoint loader rejects junk") {
    fs::path p = tmp_file("relight_ckpt_junk.dlkt");
    {
        std::ofstream f(p, std::ios::binary);
        f << "not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(p.string()), IoError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/path.dlkt"), IoError);
    fs::remove(p);
}

TEST_CASE("config defaults survive an empty stream") {
    std::istringstream in("");
    Config cfg = parse_config_text(in);
    CHECK(cfg.resolution == 64);
    CHECK(cfg.n_q == 4);
    CHECK(cfg.sigma == 5.0);
    CHECK(cfg.T == 200);
    CHECK(cfg.mask_mode == MaskApply::post_softmax);
}

TEST_CASE("config parses keys, comments and whitespace") {
    std::istringstream in(
        "# run setup\n"
        "resolution = 32\n"
        "sigma=2.5   # tighter cutoff\n"
        "\n"
        "mask_mode = logit_bias\n"
        "seed = 1234\n"
        "composite = 0\n");
    Config cfg = parse_config_text(in);
    CHECK(cfg.resolution == 32);
    CHECK(cfg.sigma == 2.5);
    CHECK(cfg.mask_mode == MaskApply::logit_bias);
    CHECK(cfg.seed == 1234);
    CHECK_FALSE(cfg.composite);
}

TEST_CASE("config rejects bad input") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_config_text(in);
    };
    CHECK_THROWS_AS(parse("no_such_key = 1\n"), ParameterError);
    CHECK_THROWS_AS(parse("resolution 32\n"), ParameterError);
    CHECK_THROWS_AS(parse("resolution = thirty\n"), ParameterError);
    CHECK_THROWS_AS(parse("resolution = 33\n"), ParameterError);
    CHECK_THROWS_AS(parse("sigma = -1\n"), ParameterError);
    CHECK_THROWS_AS(parse("mask_mode = sideways\n"), ParameterError);
    CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), IoError);
    CHECK_THROWS_WITH(parse("what = 1\n"), Catch::Matchers::ContainsSubstring("unknown key"));
}

TEST_CASE("ppm round trip is exact on the 8-bit gamma grid") {
    // writer stores gamma-encoded bytes, so representable values are
    // srgb_to_linear(k/255), not k/255
    ImageBuffer img = make_image(5, 7, 3);
    Rng rng(9);
    for (auto& v : img.v) v = srgb_to_linear(static_cast<double>(rng.index(256)) / 255.0);
    fs::path p = tmp_file("relight_fmt_test.ppm");
    write_ppm(p.string(), img);
    ImageBuffer back = read_ppm(p.string());
    REQUIRE(back.shape == img.shape);
    CHECK(max_abs_diff(back, img) == 0.0);
    fs::remove(p);
}

TEST_CASE("pgm round trip is exact on 8-bit grid values") {
    Tensor mask = make_mask(6, 4);
    Rng rng(10);
    for (auto& v : mask.v) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    fs::path p = tmp_file("relight_fmt_test.pgm");
    write_pgm(p.string(), mask);
    Tensor back = read_pgm(p.string());
    REQUIRE(back.shape == mask.shape);
    CHECK(max_abs_diff(back, mask) == 0.0);
    fs::remove(p);
}

TEST_CASE("image readers reject wrong magic and truncation") {
    fs::path p = tmp_file("relight_fmt_bad.ppm");
    {
        std::ofstream f(p, std::ios::binary);
        f << "P6\n4 4\n255\nxx"; // far too short
    }
    CHECK_THROWS_AS(read_ppm(p.string()), IoError);
    CHECK_THROWS_AS(read_pgm(p.string()), IoError); // wrong magic for P5
    fs::remove(p);
}
