#pragma once

// Analytic Lambertian renderer and paired-dataset generator: spheres and
// boxes with exact normals, directional scene lights, and backgrounds that
// carry the light's direction and color.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relight/errors.hpp"
#include "relight/image.hpp"
#include "relight/rng.hpp"
#include "relight/vocab.hpp"

namespace relight {

enum class ObjectKind { sphere, box };
enum class BackgroundStyle { gradient_sky, flat, two_tone };

struct SceneSpec {
    ObjectKind object = ObjectKind::sphere;
    double center_x = 0.0, center_y = 0.0; // image-plane units in [-1, 1]
    double radius = 0.5;                   // sphere radius
    std::array<double, 3> half_extents = {0.4, 0.4, 0.4};
    std::array<double, 3> box_euler = {0.3, 0.4, 0.2}; // box orientation
    std::array<double, 3> albedo = {0.8, 0.8, 0.8};
    std::array<double, 3> light_dir = {0.0, 0.0, 1.0}; // unit, toward the light
    std::array<double, 3> light_color = {1.0, 1.0, 1.0};
    double ambient = 0.2; // in [0, 0.4]
    BackgroundStyle background_style = BackgroundStyle::gradient_sky;
    uint64_t seed = 0;
};

struct RelightSample {
    ImageBuffer fg;     // object under neutral white frontal light
    Tensor fg_mask;     // H×W in {0,1}
    ImageBuffer bg;     // background under the scene light
    ImageBuffer target; // object composited and lit by the scene light
    std::vector<int> prompt_tokens;
    SceneSpec light_meta;
};

namespace synth_detail {

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

inline Vec3 normalized(const Vec3& v) {
    double n = std::sqrt(dot(v, v));
    if (!(n > 0)) throw ParameterError("normalized: zero vector");
    return {v[0] / n, v[1] / n, v[2] / n};
}

inline std::array<std::array<double, 3>, 3> euler_matrix(const Vec3& e) {
    double cx = std::cos(e[0]), sx = std::sin(e[0]);
    double cy = std::cos(e[1]), sy = std::sin(e[1]);
    double cz = std::cos(e[2]), sz = std::sin(e[2]);
    // R = Rz · Ry · Rx
    return {{{cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
             {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
             {-sy, cy * sx, cy * cx}}};
}

inline Vec3 mat_vec(const std::array<std::array<double, 3>, 3>& m, const Vec3& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

inline Vec3 mat_t_vec(const std::array<std::array<double, 3>, 3>& m, const Vec3& v) {
    return {m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2]};
}

// Orthographic ray (x, y, +inf) → -z against a rotated box. Returns hit state
// and the world-space entry normal.
inline bool hit_box(const SceneSpec& spec, double x, double y, Vec3& normal_out) {
    auto rot = euler_matrix(spec.box_euler);
    Vec3 origin = {x - spec.center_x, y - spec.center_y, 10.0};
    Vec3 dir = {0.0, 0.0, -1.0};
    Vec3 o = mat_t_vec(rot, origin);
    Vec3 d = mat_t_vec(rot, dir);
    double tmin = -1e30, tmax = 1e30;
    int axis = -1;
    double axis_sign = 1.0;
    for (int a = 0; a < 3; ++a) {
        double e = spec.half_extents[static_cast<size_t>(a)];
        if (std::abs(d[static_cast<size_t>(a)]) < 1e-12) {
            if (o[static_cast<size_t>(a)] < -e || o[static_cast<size_t>(a)] > e) return false;
            continue;
        }
        double t1 = (-e - o[static_cast<size_t>(a)]) / d[static_cast<size_t>(a)];
        double t2 = (e - o[static_cast<size_t>(a)]) / d[static_cast<size_t>(a)];
        double sign = -1.0;
        if (t1 > t2) {
            std::swap(t1, t2);
            sign = 1.0;
        }
        if (t1 > tmin) {
            tmin = t1;
            axis = a;
            axis_sign = sign;
        }
        tmax = std::min(tmax, t2);
    }
    if (tmin > tmax || tmin < 0 || axis < 0) return false;
    Vec3 local_n = {0, 0, 0};
    local_n[static_cast<size_t>(axis)] = axis_sign;
    normal_out = mat_vec(euler_matrix(spec.box_euler), local_n);
    return true;
}

inline bool hit_object(const SceneSpec& spec, double x, double y, Vec3& normal_out) {
    if (spec.object == ObjectKind::sphere) {
        double dx = x - spec.center_x, dy = y - spec.center_y;
        double rr = spec.radius * spec.radius - dx * dx - dy * dy;
        if (rr < 0) return false;
        double dz = std::sqrt(rr);
        normal_out = {dx / spec.radius, dy / spec.radius, dz / spec.radius};
        return true;
    }
    return hit_box(spec, x, y, normal_out);
}

inline void shade(double* px, const Vec3& n, const Vec3& light_dir, const Vec3& light_color,
                  const Vec3& albedo, double ambient) {
    double lambert = std::max(0.0, dot(n, light_dir));
    for (int k = 0; k < 3; ++k)
        px[k] = clamp01(albedo[static_cast<size_t>(k)] *
                        (light_color[static_cast<size_t>(k)] * lambert + ambient));
}

// The base background is deliberately direction-free (uniform sky, flat grey,
// or a horizon split); the only directional cue is a compact highlight at the
// light's in-plane position, so inferring the light requires a global look at
// the background rather than reading a local gradient.
inline constexpr double kLightSpotRadius = 0.15; // Gaussian sigma, [-1,1] units
inline constexpr double kLightSpotDist = 0.8;    // highlight center from origin
inline constexpr double kLightSpotGain = 0.9;

inline void background_pixel(double* px, const SceneSpec& spec, double x, double y) {
    double base[3];
    switch (spec.background_style) {
        case BackgroundStyle::gradient_sky:
            base[0] = 0.32;
            base[1] = 0.44;
            base[2] = 0.58;
            break;
        case BackgroundStyle::flat:
            base[0] = base[1] = base[2] = 0.55;
            break;
        case BackgroundStyle::two_tone: {
            double v = y > 0 ? 0.3 : 0.75; // horizon split, independent of light
            base[0] = base[1] = base[2] = v;
            break;
        }
    }
    double lx = spec.light_dir[0], ly = spec.light_dir[1];
    double norm = std::sqrt(lx * lx + ly * ly);
    double spot = 0.0;
    if (norm > 1e-9) {
        double sx = kLightSpotDist * lx / norm, sy = kLightSpotDist * ly / norm;
        double d2 = (x - sx) * (x - sx) + (y - sy) * (y - sy);
        spot = std::exp(-d2 / (2.0 * kLightSpotRadius * kLightSpotRadius));
    }
    for (int k = 0; k < 3; ++k)
        px[k] = clamp01(base[k] * (0.25 + 0.75 * spec.light_color[static_cast<size_t>(k)]) +
                        kLightSpotGain * spot * spec.light_color[static_cast<size_t>(k)]);
}

} // namespace synth_detail

inline RelightSample render_scene(const SceneSpec& spec, int h, int w) {
    if (h < 1 || w < 1) throw DimensionError("render_scene: dims must be >= 1");
    if (spec.object == ObjectKind::sphere && !(spec.radius > 0))
        throw ParameterError("render_scene: sphere radius must be > 0");
    for (double e : spec.half_extents)
        if (spec.object == ObjectKind::box && !(e > 0))
            throw ParameterError("render_scene: box half extents must be > 0");
    double norm = std::sqrt(synth_detail::dot(spec.light_dir, spec.light_dir));
    if (std::abs(norm - 1.0) > 1e-6)
        throw ParameterError("render_scene: light_dir must be unit length");

    using synth_detail::Vec3;
    const Vec3 frontal = {0.0, 0.0, 1.0};
    const Vec3 white = {1.0, 1.0, 1.0};

    RelightSample s;
    s.fg = make_image(h, w, 3);
    s.bg = make_image(h, w, 3);
    s.target = make_image(h, w, 3);
    s.fg_mask = make_mask(h, w);
    s.light_meta = spec;

    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double x = (c + 0.5) / w * 2.0 - 1.0;
            double y = (r + 0.5) / h * 2.0 - 1.0;
            double bg_px[3];
            synth_detail::background_pixel(bg_px, spec, x, y);
            Vec3 n;
            if (synth_detail::hit_object(spec, x, y, n)) {
                s.fg_mask(r, c) = 1.0;
                double px[3];
                synth_detail::shade(px, n, frontal, white, spec.albedo, 0.2);
                for (int k = 0; k < 3; ++k) s.fg(r, c, k) = px[k];
                synth_detail::shade(px, n, spec.light_dir, spec.light_color, spec.albedo,
                                    spec.ambient);
                for (int k = 0; k < 3; ++k) s.target(r, c, k) = px[k];
            } else {
                for (int k = 0; k < 3; ++k) s.target(r, c, k) = bg_px[k];
            }
            for (int k = 0; k < 3; ++k) s.bg(r, c, k) = bg_px[k];
        }
    return s;
}

// 8 stratified in-plane light directions (4 cardinal + 4 diagonal), tilted
// toward the camera so the lit side is always visible.
inline std::array<double, 3> bucket_light_dir(int bucket) {
    static const double dirs[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1},
                                      {-1, -1}, {1, -1}, {-1, 1}, {1, 1}};
    double lx = dirs[bucket][0], ly = dirs[bucket][1], lz = 0.55;
    double n = std::sqrt(lx * lx + ly * ly + lz * lz);
    return {lx / n, ly / n, lz / n};
}

inline int direction_token(int bucket) { return vocab::kDirBase + bucket; }

// 6-color light palette, slightly desaturated so shading stays informative.
inline std::array<double, 3> palette_color(int idx) {
    static const double colors[6][3] = {{1.0, 1.0, 1.0}, {1.0, 0.45, 0.4}, {0.45, 1.0, 0.45},
                                        {0.45, 0.55, 1.0}, {1.0, 0.95, 0.4}, {0.85, 0.45, 1.0}};
    return {colors[idx][0], colors[idx][1], colors[idx][2]};
}

inline SceneSpec make_scene_spec(uint64_t seed, uint64_t index) {
    Rng rng = Rng::derive(seed, index);
    SceneSpec spec;
    spec.seed = seed;
    int bucket = static_cast<int>(index % 8);
    spec.light_dir = bucket_light_dir(bucket);
    int color = rng.index(6);
    spec.light_color = palette_color(color);
    spec.object = rng.uniform() < 0.5 ? ObjectKind::sphere : ObjectKind::box;
    spec.center_x = rng.uniform(-0.25, 0.25);
    spec.center_y = rng.uniform(-0.25, 0.25);
    spec.radius = rng.uniform(0.35, 0.6);
    for (auto& e : spec.half_extents) e = rng.uniform(0.25, 0.45);
    for (auto& a : spec.box_euler) a = rng.uniform(0.15, 0.6);
    for (auto& a : spec.albedo) a = rng.uniform(0.55, 0.95);
    spec.ambient = rng.uniform(0.05, 0.3);
    int styles = rng.index(3);
    spec.background_style = static_cast<BackgroundStyle>(styles);
    return spec;
}

inline std::vector<int> scene_prompt_tokens(const SceneSpec& spec, int bucket, int color_idx) {
    return {direction_token(bucket), vocab::kColorBase + color_idx,
            vocab::kSceneBase + static_cast<int>(spec.background_style)};
}

// Writes train/val/test splits (8:1:1 by index mod 10) of n stratified
// samples under out_dir. Returns the split sizes.
inline std::array<int, 3> sample_dataset(int n, uint64_t seed, const std::string& out_dir,
                                         int h, int w) {
    if (n < 1) throw ParameterError("sample_dataset: n must be >= 1");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    const char* split_names[3] = {"train", "val", "test"};
    std::array<std::ofstream, 3> meta;
    for (int sidx = 0; sidx < 3; ++sidx) {
        fs::create_directories(fs::path(out_dir) / split_names[sidx], ec);
        if (ec) throw IoError("sample_dataset: cannot create " + out_dir);
        meta[static_cast<size_t>(sidx)].open(
            (fs::path(out_dir) / split_names[sidx] / "meta.jsonl").string());
        if (!meta[static_cast<size_t>(sidx)])
            throw IoError("sample_dataset: cannot write meta.jsonl under " + out_dir);
    }
    std::array<int, 3> counts = {0, 0, 0};
    for (int i = 0; i < n; ++i) {
        int split = (i % 10 < 8) ? 0 : (i % 10 == 8 ? 1 : 2);
        SceneSpec spec = make_scene_spec(seed, static_cast<uint64_t>(i));
        int bucket = i % 8;
        // reproduce the color index drawn inside make_scene_spec
        Rng rng = Rng::derive(seed, static_cast<uint64_t>(i));
        int color_idx = rng.index(6);
        RelightSample s = render_scene(spec, h, w);
        s.prompt_tokens = scene_prompt_tokens(spec, bucket, color_idx);

        char id[16];
        std::snprintf(id, sizeof(id), "%05d", i);
        fs::path dir = fs::path(out_dir) / split_names[split];
        std::string fg_name = std::string(id) + "_fg.ppm";
        std::string bg_name = std::string(id) + "_bg.ppm";
        std::string target_name = std::string(id) + "_target.ppm";
        std::string mask_name = std::string(id) + "_mask.pgm";
        write_ppm((dir / fg_name).string(), s.fg);
        write_ppm((dir / bg_name).string(), s.bg);
        write_ppm((dir / target_name).string(), s.target);
        write_pgm((dir / mask_name).string(), s.fg_mask);

        nlohmann::json line;
        line["id"] = i;
        line["light_dir"] = spec.light_dir;
        line["light_color"] = spec.light_color;
        line["ambient"] = spec.ambient;
        line["prompt_tokens"] = s.prompt_tokens;
        line["files"] = {{"fg", fg_name}, {"bg", bg_name}, {"target", target_name}, {"mask", mask_name}};
        meta[static_cast<size_t>(split)] << line.dump() << "\n";
        ++counts[static_cast<size_t>(split)];
    }
    return counts;
}

// Loads one split written by sample_dataset (or user-supplied data in the
// same directory format).
inline std::vector<RelightSample> load_dataset(const std::string& dataset_dir,
                                               const std::string& split) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(dataset_dir) / split;
    std::ifstream meta((dir / "meta.jsonl").string());
    if (!meta) throw StateError("load_dataset: missing " + (dir / "meta.jsonl").string());
    std::vector<RelightSample> out;
    std::string line;
    while (std::getline(meta, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        RelightSample s;
        s.fg = read_ppm((dir / j["files"]["fg"].get<std::string>()).string());
        s.bg = read_ppm((dir / j["files"]["bg"].get<std::string>()).string());
        s.target = read_ppm((dir / j["files"]["target"].get<std::string>()).string());
        Tensor m = read_pgm((dir / j["files"]["mask"].get<std::string>()).string());
        for (auto& x : m.v) x = x > 0.5 ? 1.0 : 0.0;
        s.fg_mask = m;
        s.prompt_tokens = j["prompt_tokens"].get<std::vector<int>>();
        for (int k = 0; k < 3; ++k) {
            s.light_meta.light_dir[static_cast<size_t>(k)] = j["light_dir"][static_cast<size_t>(k)];
            s.light_meta.light_color[static_cast<size_t>(k)] = j["light_color"][static_cast<size_t>(k)];
        }
        s.light_meta.ambient = j["ambient"];
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace relight
