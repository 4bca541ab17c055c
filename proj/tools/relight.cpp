// Command-line surface: data generation, training (denoiser and fixer),
// single-image relighting, evaluation, the ablation harness, and diagnostic
// dumps. Reports are JSON files plus a plain-text summary; all file outputs
// are byte-deterministic for a fixed --seed (wall-clock timings go to stdout
// only, never into report files).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relight/checkpoint.hpp"
#include "relight/config.hpp"
#include "relight/fixer.hpp"
#include "relight/metrics.hpp"
#include "relight/pipeline.hpp"
#include "relight/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace relight;

namespace {

struct CommonOpts {
    std::string config_path;
    uint64_t seed = 0;
    std::string out_dir;
    std::string mode = "image";
    int steps = -1;        // sampling steps; -1 = use config
    double guidance = -1;  // -1 = use config
    std::string checkpoint;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_out) {
    cmd->add_option("--config", o.config_path, "key=value run configuration file");
    cmd->add_option("--seed", o.seed, "master RNG seed");
    auto* out = cmd->add_option("--out", o.out_dir, "output directory");
    if (need_out) out->required();
    cmd->add_option("--mode", o.mode, "conditioning mode")
        ->check(CLI::IsMember({"image", "text", "both"}));
    cmd->add_option("--steps", o.steps, "sampling steps");
    cmd->add_option("--guidance", o.guidance, "classifier-free guidance scale");
    cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint path");
}

Config resolve_config(const CommonOpts& o) {
    Config cfg = o.config_path.empty() ? Config{} : load_config(o.config_path);
    cfg.seed = o.seed;
    if (o.steps > 0) cfg.steps = o.steps;
    if (o.guidance >= 0) cfg.guidance = o.guidance;
    return cfg;
}

RelightMode resolve_mode(const std::string& m) {
    if (m == "image") return RelightMode::image_based;
    if (m == "text") return RelightMode::text_based;
    return RelightMode::both;
}

void ensure_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed for " + path.string());
}

void write_json_file(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json config_echo(const Config& cfg) {
    return json{{"resolution", cfg.resolution}, {"d", cfg.d},
                {"n_q", cfg.n_q},               {"sigma", cfg.sigma},
                {"T", cfg.T},                   {"steps", cfg.steps},
                {"guidance", cfg.guidance},     {"lr", cfg.lr},
                {"seed", cfg.seed},             {"heads", cfg.heads},
                {"mask_mode", cfg.mask_mode == MaskApply::post_softmax ? "post_softmax"
                                                                       : "logit_bias"},
                {"composite", cfg.composite}};
}

ad::ParamStore load_required_checkpoint(const std::string& path) {
    if (path.empty() || !fs::exists(path))
        throw StateError("missing checkpoint '" + path + "' — train first or pass --checkpoint");
    return load_checkpoint(path);
}

PipelineVariant variant_by_name(const std::string& name) {
    PipelineVariant v;
    if (name == "full" || name == "no_fixer") return v;
    if (name == "no_adapter") {
        v.use_adapter = false;
        return v;
    }
    if (name == "no_spectral_filter") {
        v.use_spectral = false;
        return v;
    }
    if (name == "unmasked_adapter") {
        v.masked_adapter = false;
        return v;
    }
    throw ParameterError("unknown variant '" + name + "'");
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- training loops shared by train and ablate ----

json run_training(const std::string& data_dir, const Config& cfg, const PipelineVariant& var,
                  RelightMode mode, int train_steps, int batch_size, uint64_t seed,
                  ad::ParamStore& ps) {
    auto data = load_dataset(data_dir, "train");
    if (data.empty()) throw StateError("training split is empty under " + data_dir);
    init_pipeline_params(ps, cfg, seed);
    NoiseSchedule sch = make_cosine_schedule(cfg.T);
    json curve = json::array();
    double running = 0;
    for (int step = 1; step <= train_steps; ++step) {
        Rng pick = Rng::derive(seed, 0xba7c4000ULL + static_cast<uint64_t>(step));
        std::vector<RelightSample> batch;
        for (int j = 0; j < batch_size; ++j)
            batch.push_back(data[static_cast<size_t>(pick.index(static_cast<int>(data.size())))]);
        double loss = train_step(batch, ps, sch, cfg, var, mode, seed, step);
        running = step == 1 ? loss : 0.98 * running + 0.02 * loss;
        if (step == 1 || step % 50 == 0)
            curve.push_back({{"step", step}, {"loss", loss}, {"smoothed", running}});
    }
    return curve;
}

json run_fixer_training(const std::string& data_dir, double lr, int train_steps, int batch_size,
                        uint64_t seed, ad::ParamStore& ps) {
    auto data = load_dataset(data_dir, "train");
    if (data.empty()) throw StateError("training split is empty under " + data_dir);
    init_fixer_params(ps, seed);
    PerceptualProxy proxy = PerceptualProxy::make();
    json curve = json::array();
    for (int step = 1; step <= train_steps; ++step) {
        Rng pick = Rng::derive(seed, 0xf13e4000ULL + static_cast<uint64_t>(step));
        std::vector<std::pair<ImageBuffer, ImageBuffer>> batch;
        for (int j = 0; j < batch_size; ++j) {
            const auto& s = data[static_cast<size_t>(pick.index(static_cast<int>(data.size())))];
            batch.emplace_back(s.target, random_color_transform(s.target, pick.next_u64()).first);
        }
        double loss = fixer_train_step(batch, ps, proxy, lr, step);
        if (step == 1 || step % 50 == 0) curve.push_back({{"step", step}, {"loss", loss}});
    }
    return curve;
}

// ---- evaluation shared by eval and ablate ----

struct EvalResult {
    json report;
    double mean_psnr = 0, mean_ssim = 0, mean_dcs = 0;
    std::vector<double> per_sample_psnr;
};

EvalResult evaluate_split(const std::string& data_dir, const std::string& split,
                          ad::ParamStore& ps, ad::ParamStore* fixer_ps, const Config& cfg,
                          const PipelineVariant& var, RelightMode mode, uint64_t seed,
                          int limit = 0) {
    auto data = load_dataset(data_dir, split);
    if (data.empty()) throw StateError("split '" + split + "' is empty under " + data_dir);
    if (limit > 0 && static_cast<int>(data.size()) > limit)
        data.resize(static_cast<size_t>(limit));
    NoiseSchedule sch = make_cosine_schedule(cfg.T);

    EvalResult res;
    json samples = json::array();
    int n = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        const auto& s = data[i];
        RelightInput inp = sample_to_input(s, mode);
        ImageBuffer relit = sample(inp, ps, sch, cfg, var, cfg.steps, cfg.guidance,
                                   Rng::derive(seed, 0xe4a10000ULL + i).next_u64());
        if (fixer_ps) relit = apply_fixer(relit, s.fg, s.fg_mask, *fixer_ps);
        double p = psnr(relit, s.target);
        double ss = ssim(relit, s.target);
        double d = directional_consistency(relit, s.fg_mask, s.light_meta.light_dir);
        res.mean_psnr += p;
        res.mean_ssim += ss;
        res.mean_dcs += d;
        res.per_sample_psnr.push_back(p);
        samples.push_back({{"id", i}, {"psnr", p}, {"ssim", ss}, {"dcs", d}});
        ++n;
    }
    res.mean_psnr /= n;
    res.mean_ssim /= n;
    res.mean_dcs /= n;
    res.report = {{"split", split},
                  {"count", n},
                  {"metric_notes",
                   "dcs is a diagnostic proxy specific to this project, not a standard metric"},
                  {"aggregate",
                   {{"psnr", res.mean_psnr}, {"ssim", res.mean_ssim}, {"dcs", res.mean_dcs}}},
                  {"samples", samples}};
    return res;
}

ImageBuffer normalize_plane(const Tensor& t) {
    double lo = 1e300, hi = -1e300;
    for (double x : t.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    double span = hi - lo < 1e-12 ? 1.0 : hi - lo;
    Tensor out = t;
    for (auto& x : out.v) x = (x - lo) / span;
    return out;
}

} // namespace

// ---- subcommand bodies ----

namespace {

int cmd_gen_data(const CommonOpts& o, int n, int res) {
    auto t0 = std::chrono::steady_clock::now();
    ensure_out(o.out_dir);
    auto counts = sample_dataset(n, o.seed, o.out_dir, res, res);
    json manifest = {{"n", n},
                     {"resolution", res},
                     {"seed", o.seed},
                     {"splits", {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}}}};
    write_json_file(fs::path(o.out_dir) / "manifest.json", manifest);
    std::cout << "gen-data: wrote " << n << " samples (" << counts[0] << "/" << counts[1] << "/"
              << counts[2] << ") to " << o.out_dir << " in " << elapsed_s(t0) << " s\n";
    return 0;
}

int cmd_train(const CommonOpts& o, const std::string& data_dir, const std::string& variant,
              int train_steps, int batch_size) {
    auto t0 = std::chrono::steady_clock::now();
    Config cfg = resolve_config(o);
    PipelineVariant var = variant_by_name(variant);
    ensure_out(o.out_dir);
    ad::ParamStore ps;
    json curve = run_training(data_dir, cfg, var, resolve_mode(o.mode), train_steps, batch_size,
                              o.seed, ps);
    fs::path ckpt = o.checkpoint.empty() ? fs::path(o.out_dir) / "model.dlkt" : fs::path(o.checkpoint);
    save_checkpoint(ckpt.string(), ps);
    json report = {{"command", "train"},       {"variant", variant},
                   {"train_steps", train_steps}, {"batch", batch_size},
                   {"config", config_echo(cfg)}, {"checkpoint", ckpt.filename().string()},
                   {"loss_curve", curve}};
    write_json_file(fs::path(o.out_dir) / "train_report.json", report);
    std::cout << "train: " << train_steps << " steps, final loss "
              << curve.back()["loss"].dump() << ", checkpoint " << ckpt.string() << " ("
              << elapsed_s(t0) << " s)\n";
    return 0;
}

int cmd_train_fixer(const CommonOpts& o, const std::string& data_dir, int train_steps,
                    int batch_size) {
    auto t0 = std::chrono::steady_clock::now();
    Config cfg = resolve_config(o);
    ensure_out(o.out_dir);
    ad::ParamStore ps;
    json curve = run_fixer_training(data_dir, cfg.lr, train_steps, batch_size, o.seed, ps);
    fs::path ckpt = o.checkpoint.empty() ? fs::path(o.out_dir) / "fixer.dlkt" : fs::path(o.checkpoint);
    save_checkpoint(ckpt.string(), ps);
    json report = {{"command", "train-fixer"},   {"train_steps", train_steps},
                   {"batch", batch_size},        {"config", config_echo(cfg)},
                   {"checkpoint", ckpt.filename().string()}, {"loss_curve", curve}};
    write_json_file(fs::path(o.out_dir) / "fixer_report.json", report);
    std::cout << "train-fixer: " << train_steps << " steps, final loss "
              << curve.back()["loss"].dump() << " (" << elapsed_s(t0) << " s)\n";
    return 0;
}

int cmd_relight(const CommonOpts& o, const std::string& fg_path, const std::string& mask_path,
                const std::string& bg_path, const std::string& fixer_ckpt,
                const std::vector<std::string>& prompt_words) {
    auto t0 = std::chrono::steady_clock::now();
    Config cfg = resolve_config(o);
    ensure_out(o.out_dir);
    ad::ParamStore ps = load_required_checkpoint(o.checkpoint);

    RelightInput inp;
    inp.fg = read_ppm(fg_path);
    inp.fg_mask = read_pgm(mask_path);
    inp.mode = resolve_mode(o.mode) == RelightMode::text_based ? RelightMode::text_based
                                                               : RelightMode::image_based;
    if (inp.mode == RelightMode::image_based) {
        if (bg_path.empty()) throw ParameterError("image mode requires --bg");
        inp.bg = read_ppm(bg_path);
        inp.prompt_tokens = {vocab::kBlend};
    } else {
        inp.bg = make_image(inp.fg.dim(0), inp.fg.dim(1), 3, 0.0);
        if (prompt_words.empty()) throw ParameterError("text mode requires --prompt words");
        for (const auto& wstr : prompt_words) inp.prompt_tokens.push_back(vocab::id_of(wstr));
    }
    // binarize the mask (PGM quantization can leave near-0/near-1 values)
    for (auto& v : inp.fg_mask.v) v = v > 0.5 ? 1.0 : 0.0;

    NoiseSchedule sch = make_cosine_schedule(cfg.T);
    ImageBuffer out = sample(inp, ps, sch, cfg, PipelineVariant{}, cfg.steps, cfg.guidance, o.seed);
    if (!fixer_ckpt.empty()) {
        ad::ParamStore fps = load_required_checkpoint(fixer_ckpt);
        out = apply_fixer(out, inp.fg, inp.fg_mask, fps);
    }
    fs::path out_img = fs::path(o.out_dir) / "relit.ppm";
    write_ppm(out_img.string(), out);
    json report = {{"command", "relight"},
                   {"mode", o.mode},
                   {"config", config_echo(cfg)},
                   {"fixer", !fixer_ckpt.empty()},
                   {"output", out_img.filename().string()}};
    write_json_file(fs::path(o.out_dir) / "relight_report.json", report);
    std::cout << "relight: wrote " << out_img.string() << " (" << elapsed_s(t0) << " s)\n";
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& data_dir, const std::string& split,
             const std::string& fixer_ckpt, int limit) {
    auto t0 = std::chrono::steady_clock::now();
    Config cfg = resolve_config(o);
    ensure_out(o.out_dir);
    ad::ParamStore ps = load_required_checkpoint(o.checkpoint);
    ad::ParamStore fixer_ps;
    bool use_fixer = !fixer_ckpt.empty();
    if (use_fixer) fixer_ps = load_required_checkpoint(fixer_ckpt);

    EvalResult res = evaluate_split(data_dir, split, ps, use_fixer ? &fixer_ps : nullptr, cfg,
                                    PipelineVariant{}, resolve_mode(o.mode), o.seed, limit);
    json report = {{"command", "eval"}, {"config", config_echo(cfg)}, {"seed", o.seed}};
    report.update(res.report);
    write_json_file(fs::path(o.out_dir) / "eval_report.json", report);
    std::string summary =
        "eval split=" + split + " n=" + std::to_string(res.report["count"].get<int>()) +
        "\n  mean psnr " + std::to_string(res.mean_psnr) + " dB\n  mean ssim " +
        std::to_string(res.mean_ssim) + "\n  mean dcs  " + std::to_string(res.mean_dcs) +
        " (project-specific proxy metric)\n";
    write_text(fs::path(o.out_dir) / "eval_summary.txt", summary);
    std::cout << summary << "wall clock " << elapsed_s(t0) << " s\n";
    return 0;
}

int cmd_ablate(const CommonOpts& o, const std::string& data_dir, const std::string& split,
               int train_steps, int batch_size, int limit) {
    auto t0 = std::chrono::steady_clock::now();
    Config cfg = resolve_config(o);
    ensure_out(o.out_dir);
    RelightMode mode = resolve_mode(o.mode);

    // one fixer shared by the variants that use it
    ad::ParamStore fixer_ps;
    run_fixer_training(data_dir, cfg.lr, std::min(train_steps, 500), batch_size, o.seed, fixer_ps);

    const std::vector<std::string> variants = {"full", "no_adapter", "no_spectral_filter",
                                               "unmasked_adapter", "no_fixer"};
    json table = json::array();
    std::string summary = "ablation (train_steps=" + std::to_string(train_steps) + ")\n";
    ad::ParamStore full_ps; // reused by no_fixer
    for (const auto& name : variants) {
        PipelineVariant var = variant_by_name(name);
        ad::ParamStore local;
        ad::ParamStore* ps = &local;
        if (name == "full") {
            run_training(data_dir, cfg, var, mode, train_steps, batch_size, o.seed, full_ps);
            ps = &full_ps;
        } else if (name == "no_fixer") {
            ps = &full_ps; // same weights, fixer skipped at evaluation
        } else {
            run_training(data_dir, cfg, var, mode, train_steps, batch_size, o.seed, local);
        }
        bool fixer_on = name != "no_fixer";
        EvalResult res = evaluate_split(data_dir, split, *ps, fixer_on ? &fixer_ps : nullptr, cfg,
                                        var, mode, o.seed, limit);
        table.push_back({{"variant", name},
                         {"psnr", res.mean_psnr},
                         {"ssim", res.mean_ssim},
                         {"dcs", res.mean_dcs}});
        summary += "  " + name + std::string(name.size() < 20 ? 20 - name.size() : 1, ' ') +
                   " psnr " + std::to_string(res.mean_psnr) + "  ssim " +
                   std::to_string(res.mean_ssim) + "  dcs " + std::to_string(res.mean_dcs) + "\n";
    }
    json report = {{"command", "ablate"},       {"config", config_echo(cfg)},
                   {"seed", o.seed},            {"train_steps", train_steps},
                   {"split", split},            {"variants", table}};
    write_json_file(fs::path(o.out_dir) / "ablation_report.json", report);
    write_text(fs::path(o.out_dir) / "ablation_summary.txt", summary);
    std::cout << summary << "wall clock " << elapsed_s(t0) << " s\n";
    return 0;
}

int cmd_inspect(const CommonOpts& o, const std::string& fg_path) {
    Config cfg = resolve_config(o);
    ensure_out(o.out_dir);

    // directional decay maps
    for (int d = 0; d < kNumDirections; ++d) {
        Direction dir = static_cast<Direction>(d);
        Tensor map = make_decay_map(dir, cfg.resolution, cfg.resolution);
        write_pgm((fs::path(o.out_dir) / ("decay_" + std::string(direction_name(dir)) + ".pgm"))
                      .string(),
                  map);
    }

    // wavelet subbands of the probe image (a rendered scene if none given)
    ImageBuffer probe = fg_path.empty()
                            ? render_scene(make_scene_spec(o.seed, 0), cfg.resolution,
                                           cfg.resolution)
                                  .target
                            : read_ppm(fg_path);
    SubbandSplit bands = haar_analyze(probe);
    ImageBuffer lq = bands.lq;
    for (auto& v : lq.v) v = clamp01(v);
    write_ppm((fs::path(o.out_dir) / "subband_lq.ppm").string(), lq);
    write_ppm((fs::path(o.out_dir) / "subband_hq.ppm").string(), normalize_plane(bands.hq));

    // condensation attention heatmap over a background
    ad::ParamStore ps;
    if (!o.checkpoint.empty()) ps = load_checkpoint(o.checkpoint);
    else init_pipeline_params(ps, cfg, o.seed);
    ImageBuffer bg = render_scene(make_scene_spec(o.seed, 1), cfg.resolution, cfg.resolution).bg;
    ad::Tape t;
    ad::Var feat = bg_features(t, ps, bg, cfg, PipelineVariant{});
    Tensor attn;
    AttnVars p;
    p.wq = t.param(ps.at("pipe.cond.wq"));
    p.wk = t.param(ps.at("pipe.cond.wk"));
    p.wv = t.param(ps.at("pipe.cond.wv"));
    p.wo = t.param(ps.at("pipe.cond.wo"));
    condense_light(t, feat, t.param(ps.at("pipe.queries")), cfg.n_q, p, cfg.heads, cfg.mask_mode,
                   true, &attn);
    write_pgm((fs::path(o.out_dir) / "attn_condense.pgm").string(), normalize_plane(attn));

    std::cout << "inspect: wrote diagnostics to " << o.out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy latent-diffusion relighting toolkit"};
    app.require_subcommand(1);

    CommonOpts gen_o, train_o, fixer_o, relight_o, eval_o, ablate_o, inspect_o;
    int gen_n = 800, gen_res = 64;
    std::string train_data, train_variant = "full";
    int train_steps = 2000, train_batch = 8;
    std::string fixer_data;
    int fixer_steps = 2000, fixer_batch = 8;
    std::string rl_fg, rl_mask, rl_bg, rl_fixer;
    std::vector<std::string> rl_prompt;
    std::string eval_data, eval_split = "test", eval_fixer;
    int eval_limit = 0;
    std::string ab_data, ab_split = "val";
    int ab_steps = 1000, ab_batch = 8, ab_limit = 0;
    std::string ins_fg;

    auto* gen = app.add_subcommand("gen-data", "render a synthetic paired dataset");
    add_common(gen, gen_o, true);
    gen->add_option("--n", gen_n, "sample count");
    gen->add_option("--res", gen_res, "image side length");

    auto* train = app.add_subcommand("train", "train the denoiser");
    add_common(train, train_o, true);
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--variant", train_variant, "pipeline variant")
        ->check(CLI::IsMember({"full", "no_adapter", "no_spectral_filter", "unmasked_adapter"}));
    train->add_option("--train-steps", train_steps, "optimizer steps");
    train->add_option("--batch", train_batch, "batch size");

    auto* tfix = app.add_subcommand("train-fixer", "train the foreground fixer");
    add_common(tfix, fixer_o, true);
    tfix->add_option("--data", fixer_data, "dataset directory")->required();
    tfix->add_option("--train-steps", fixer_steps, "optimizer steps");
    tfix->add_option("--batch", fixer_batch, "batch size");

    auto* rl = app.add_subcommand("relight", "relight one foreground image");
    add_common(rl, relight_o, true);
    rl->add_option("--fg", rl_fg, "foreground PPM")->required();
    rl->add_option("--mask", rl_mask, "foreground mask PGM")->required();
    rl->add_option("--bg", rl_bg, "background PPM (image mode)");
    rl->add_option("--fixer-checkpoint", rl_fixer, "fixer checkpoint");
    rl->add_option("--prompt", rl_prompt, "prompt words (text mode)");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    add_common(ev, eval_o, true);
    ev->add_option("--data", eval_data, "dataset directory")->required();
    ev->add_option("--split", eval_split, "dataset split");
    ev->add_option("--fixer-checkpoint", eval_fixer, "fixer checkpoint");
    ev->add_option("--limit", eval_limit, "evaluate at most N samples (0 = all)");

    auto* ab = app.add_subcommand("ablate", "train and compare pipeline variants");
    add_common(ab, ablate_o, true);
    ab->add_option("--data", ab_data, "dataset directory")->required();
    ab->add_option("--split", ab_split, "evaluation split");
    ab->add_option("--train-steps", ab_steps, "optimizer steps per variant");
    ab->add_option("--batch", ab_batch, "batch size");
    ab->add_option("--limit", ab_limit, "evaluate at most N samples (0 = all)");

    auto* ins = app.add_subcommand("inspect", "dump decay maps, subbands, attention heatmaps");
    add_common(ins, inspect_o, true);
    ins->add_option("--fg", ins_fg, "probe image (PPM); default: a rendered scene");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(gen_o, gen_n, gen_res);
        if (train->parsed())
            return cmd_train(train_o, train_data, train_variant, train_steps, train_batch);
        if (tfix->parsed()) return cmd_train_fixer(fixer_o, fixer_data, fixer_steps, fixer_batch);
        if (rl->parsed()) return cmd_relight(relight_o, rl_fg, rl_mask, rl_bg, rl_fixer, rl_prompt);
        if (ev->parsed()) return cmd_eval(eval_o, eval_data, eval_split, eval_fixer, eval_limit);
        if (ab->parsed()) return cmd_ablate(ablate_o, ab_data, ab_split, ab_steps, ab_batch, ab_limit);
        if (ins->parsed()) return cmd_inspect(inspect_o, ins_fg);
        return 2;
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const StateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
