#include "x0t/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "x0t/archive.hpp"
#include "x0t/cache.hpp"
#include "x0t/deviation.hpp"
#include "x0t/errors.hpp"
#include "x0t/log.hpp"
#include "x0t/masking.hpp"
#include "x0t/matching.hpp"

namespace x0t {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

json backend_json(const BackendConfig& b) {
    return json{
        {"kind", b.kind},
        {"seed", b.mock.seed},
        {"latent", {b.mock.latent_channels, b.mock.latent_height, b.mock.latent_width}},
        {"token_count", b.mock.token_count},
        {"embed_dim", b.mock.embed_dim},
        {"feature_dim", b.mock.feature_dim},
        {"train_steps", b.mock.train_steps},
        {"timestep_bands", b.mock.timestep_bands},
        {"filter_scale", b.mock.filter_scale},
        {"model_id", b.model_id},
        {"device", b.device},
        {"guidance_scale", b.guidance_scale},
        {"dift_layer", b.dift_layer},
        {"dift_timestep", b.dift_timestep},
    };
}

void parse_backend(const json& j, BackendConfig& b) {
    read_key(j, "kind", b.kind);
    if (j.contains("latent")) {
        const auto shape = j.at("latent").get<std::vector<int>>();
        if (shape.size() != 3) {
            throw ConfigError("backend.latent must be [channels, height, width]");
        }
        b.mock.latent_channels = shape[0];
        b.mock.latent_height = shape[1];
        b.mock.latent_width = shape[2];
    }
    read_key(j, "seed", b.mock.seed);
    read_key(j, "token_count", b.mock.token_count);
    read_key(j, "embed_dim", b.mock.embed_dim);
    read_key(j, "feature_dim", b.mock.feature_dim);
    read_key(j, "train_steps", b.mock.train_steps);
    read_key(j, "timestep_bands", b.mock.timestep_bands);
    read_key(j, "filter_scale", b.mock.filter_scale);
    read_key(j, "model_id", b.model_id);
    read_key(j, "device", b.device);
    read_key(j, "guidance_scale", b.guidance_scale);
    read_key(j, "dift_layer", b.dift_layer);
    read_key(j, "dift_timestep", b.dift_timestep);
    b.mock.default_dift_timestep = b.dift_timestep;
    b.mock.default_guidance_scale = b.guidance_scale;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    try {
        read_key(j, "source_image", cfg.source_image);
        read_key(j, "target_image", cfg.target_image);
        read_key(j, "source_prompt", cfg.source_prompt);
        read_key(j, "target_prompt", cfg.target_prompt);
        read_key(j, "object_word", cfg.object_word);

        if (j.contains("transfer")) {
            const json& t = j.at("transfer");
            read_key(t, "delta", cfg.transfer.delta);
            read_key(t, "lambda", cfg.transfer.lambda_);
            read_key(t, "gamma", cfg.transfer.gamma);
            read_key(t, "start_step", cfg.transfer.start_step);
            read_key(t, "end_step", cfg.transfer.end_step);
            read_key(t, "mask_threshold", cfg.transfer.mask_threshold);
            if (t.contains("matching")) {
                cfg.transfer.matching_mode =
                    matching_mode_from_string(t.at("matching").get<std::string>());
            }
        }
        if (j.contains("schedule")) {
            const json& sj = j.at("schedule");
            read_key(sj, "num_sample_steps", cfg.schedule.num_sample_steps);
            read_key(sj, "train_steps", cfg.schedule.train_steps);
            read_key(sj, "beta_start", cfg.schedule.beta_start);
            read_key(sj, "beta_end", cfg.schedule.beta_end);
        }

        read_key(j, "seed", cfg.seed);
        cfg.backend.mock.seed = cfg.seed;
        if (j.contains("backend")) {
            parse_backend(j.at("backend"), cfg.backend);
        }
        cfg.backend.mock.train_steps = cfg.schedule.train_steps;

        if (j.contains("inversion")) {
            const json& ij = j.at("inversion");
            read_key(ij, "pivot_guidance_scale", cfg.inversion.pivot_guidance_scale);
            read_key(ij, "fixed_point_iterations", cfg.inversion.fixed_point_iterations);
            read_key(ij, "fixed_point_tolerance", cfg.inversion.fixed_point_tolerance);
            if (ij.contains("null_text")) {
                const json& nj = ij.at("null_text");
                read_key(nj, "iterations_per_step", cfg.null_text.iterations_per_step);
                read_key(nj, "learning_rate", cfg.null_text.learning_rate);
                read_key(nj, "early_stop_epsilon", cfg.null_text.early_stop_epsilon);
            }
        }
        read_key(j, "replay_guidance_scale", cfg.replay_guidance_scale);
        if (j.contains("match_score_threshold")) {
            cfg.match_score_threshold = j.at("match_score_threshold").get<float>();
        }

        read_key(j, "cache_dir", cfg.cache_dir);
        read_key(j, "out_dir", cfg.out_dir);
        read_key(j, "use_cache", cfg.use_cache);
        read_key(j, "export_mask", cfg.export_mask);
        read_key(j, "dump_diagnostics", cfg.dump_diagnostics);
        read_key(j, "dump_matching", cfg.dump_matching);
        if (j.contains("mask_override")) {
            cfg.mask_override = j.at("mask_override").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    try {
        return from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse config file " + path + ": " + e.what());
    }
}

json RunConfig::to_json() const {
    json j = {
        {"source_image", source_image},
        {"target_image", target_image},
        {"source_prompt", source_prompt},
        {"target_prompt", target_prompt},
        {"object_word", object_word},
        {"transfer",
         {{"delta", transfer.delta},
          {"lambda", transfer.lambda_},
          {"gamma", transfer.gamma},
          {"start_step", transfer.start_step},
          {"end_step", transfer.end_step},
          {"matching", to_string(transfer.matching_mode)},
          {"mask_threshold", transfer.mask_threshold}}},
        {"schedule",
         {{"num_sample_steps", schedule.num_sample_steps},
          {"train_steps", schedule.train_steps},
          {"beta_start", schedule.beta_start},
          {"beta_end", schedule.beta_end}}},
        {"backend", backend_json(resolved_backend())},
        {"inversion",
         {{"pivot_guidance_scale", inversion.pivot_guidance_scale},
          {"fixed_point_iterations", inversion.fixed_point_iterations},
          {"fixed_point_tolerance", inversion.fixed_point_tolerance},
          {"null_text",
           {{"iterations_per_step", null_text.iterations_per_step},
            {"learning_rate", null_text.learning_rate},
            {"early_stop_epsilon", null_text.early_stop_epsilon}}}}},
        {"replay_guidance_scale", replay_guidance_scale},
        {"cache_dir", resolved_cache_dir()},
        {"out_dir", out_dir},
        {"seed", seed},
        {"use_cache", use_cache},
        {"export_mask", export_mask},
        {"dump_diagnostics", dump_diagnostics},
        {"dump_matching", dump_matching},
    };
    if (mask_override) {
        j["mask_override"] = *mask_override;
    }
    if (match_score_threshold) {
        j["match_score_threshold"] = *match_score_threshold;
    }
    return j;
}

void RunConfig::validate() const {
    if (source_image.empty() || !fs::exists(source_image)) {
        throw ConfigError("source image not found: '" + source_image + "'");
    }
    if (target_image.empty() || !fs::exists(target_image)) {
        throw ConfigError("target image not found: '" + target_image + "'");
    }
    if (source_prompt.empty() || target_prompt.empty()) {
        throw ConfigError("prompts must be non-empty");
    }
    if (object_word.empty()) {
        throw ConfigError("object_word must be set");
    }
    // Word-level containment; the backend tokenizer re-checks at run time.
    bool found = false;
    std::istringstream is(source_prompt);
    std::string tok;
    while (is >> tok) {
        found = found || tok == object_word;
    }
    if (!found) {
        throw ConfigError("object word '" + object_word + "' does not occur in source prompt");
    }
    if (mask_override && !fs::exists(*mask_override)) {
        throw ConfigError("mask override not found: " + *mask_override);
    }
    transfer.validate(schedule.num_sample_steps);
    null_text.validate();
}

std::string RunConfig::resolved_cache_dir() const {
    if (!cache_dir.empty()) {
        return cache_dir;
    }
    if (const char* env = std::getenv("X0T_CACHE_DIR"); env && *env) {
        return env;
    }
    return (fs::path(out_dir) / "cache").string();
}

BackendConfig RunConfig::resolved_backend() const {
    BackendConfig b = backend;
    b.mock.train_steps = schedule.train_steps;
    b.mock.default_dift_timestep = b.dift_timestep;
    b.mock.default_guidance_scale = b.guidance_scale;
    return b;
}

std::string source_cache_descriptor(const RunConfig& cfg, const ImageRgb& image) {
    json d = {
        {"kind", "source"},
        {"image", content_hash(image)},
        {"prompt", cfg.source_prompt},
        {"schedule", cfg.schedule.build().describe()},
        {"backend", backend_json(cfg.resolved_backend()).dump()},
        {"inversion", cfg.inversion.describe()},
        {"null_text",
         {{"iterations_per_step", cfg.null_text.iterations_per_step},
          {"learning_rate", cfg.null_text.learning_rate},
          {"early_stop_epsilon", cfg.null_text.early_stop_epsilon}}},
        {"replay_guidance_scale", cfg.replay_guidance_scale},
    };
    return d.dump();
}

std::string target_cache_descriptor(const RunConfig& cfg, const ImageRgb& image) {
    json d = {
        {"kind", "target"},
        {"image", content_hash(image)},
        {"prompt", cfg.target_prompt},
        {"schedule", cfg.schedule.build().describe()},
        {"backend", backend_json(cfg.resolved_backend()).dump()},
        {"inversion", cfg.inversion.describe()},
    };
    return d.dump();
}

LatentTrajectory obtain_source_trajectory(const RunConfig& cfg, const ImageRgb& image,
                                          const Schedule& s, Backend& b, bool* cache_hit) {
    const std::string descriptor = source_cache_descriptor(cfg, image);
    const std::string key = TrajectoryCache::key_of(descriptor);
    TrajectoryCache cache(cfg.resolved_cache_dir());
    if (cache_hit) {
        *cache_hit = false;
    }
    if (cfg.use_cache) {
        if (auto cached = cache.get(key)) {
            log_info("source inversion: cache hit " + key.substr(0, 12));
            if (cache_hit) {
                *cache_hit = true;
            }
            return std::move(*cached);
        }
    }
    LatentTrajectory traj = null_text_invert(image, cfg.source_prompt, s, b, cfg.null_text,
                                             cfg.inversion, cfg.replay_guidance_scale);
    if (cfg.use_cache) {
        cache.put(key, traj, descriptor);
    }
    return traj;
}

LatentTrajectory obtain_target_trajectory(const RunConfig& cfg, const ImageRgb& image,
                                          const Schedule& s, Backend& b, bool* cache_hit) {
    const std::string descriptor = target_cache_descriptor(cfg, image);
    const std::string key = TrajectoryCache::key_of(descriptor);
    TrajectoryCache cache(cfg.resolved_cache_dir());
    if (cache_hit) {
        *cache_hit = false;
    }
    if (cfg.use_cache) {
        if (auto cached = cache.get(key)) {
            log_info("target inversion: cache hit " + key.substr(0, 12));
            if (cache_hit) {
                *cache_hit = true;
            }
            return std::move(*cached);
        }
    }
    LatentTrajectory traj = ddim_invert(image, cfg.target_prompt, s, b, cfg.inversion);
    if (cfg.use_cache) {
        cache.put(key, traj, descriptor);
    }
    return traj;
}

namespace {

ObjectMask load_mask_override(const std::string& path, int h, int w) {
    const ImageRgb img = load_png(path);
    if (img.height != h || img.width != w) {
        throw ShapeError("mask override is " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + ", latent grid is " + std::to_string(h) +
                         "x" + std::to_string(w));
    }
    ObjectMask m = ObjectMask::empty_mask(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float v = (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0f;
            m.data[static_cast<size_t>(y) * w + x] = v >= 0.5f ? 1 : 0;
        }
    }
    return m;
}

void dump_latent(const fs::path& dir, int index, const char* role, const Latent& l) {
    ArchivedArray a;
    a.shape = {l.channels, l.height, l.width};
    a.role = role;
    a.timestep = l.step;
    a.values = l.data;
    char name[64];
    std::snprintf(name, sizeof(name), "step_%03d_%s.x0ta", index, role);
    write_archive(a, (dir / name).string());
}

template <typename Fn>
auto staged(const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

}  // namespace

RunResult run_transfer(const RunConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    json timings = json::object();

    cfg.validate();
    const Schedule s = cfg.schedule.build();
    cfg.transfer.validate(s.num_sample_steps());

    std::unique_ptr<Backend> backend =
        staged("backend", [&] { return make_backend(cfg.resolved_backend()); });
    Backend& b = *backend;

    auto t_stage = std::chrono::steady_clock::now();
    const ImageRgb source_img =
        staged("load-images", [&] { return load_png(cfg.source_image); });
    const ImageRgb target_img =
        staged("load-images", [&] { return load_png(cfg.target_image); });
    timings["load_images_s"] = seconds_since(t_stage);

    const std::vector<int> object_tokens =
        b.token_indices_for_word(cfg.source_prompt, cfg.object_word);
    if (object_tokens.empty()) {
        throw ConfigError("object word '" + cfg.object_word +
                          "' not found by the backend tokenizer in the source prompt");
    }

    t_stage = std::chrono::steady_clock::now();
    const LatentTrajectory src = staged("source-inversion", [&] {
        return obtain_source_trajectory(cfg, source_img, s, b, nullptr);
    });
    timings["source_inversion_s"] = seconds_since(t_stage);

    t_stage = std::chrono::steady_clock::now();
    const LatentTrajectory tar = staged("target-inversion", [&] {
        return obtain_target_trajectory(cfg, target_img, s, b, nullptr);
    });
    timings["target_inversion_s"] = seconds_since(t_stage);

    staged("denoise", [&] {
        src.require_matches(s);
        tar.require_matches(s);
        if (!src.carries_uncond()) {
            throw ContractError("source trajectory is missing unconditional embeddings");
        }
        return 0;
    });

    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    const fs::path diag_dir = out_dir / "diagnostics";
    if (cfg.dump_diagnostics) {
        fs::create_directories(diag_dir);
    }

    // Denoise with deviation inside the window.
    t_stage = std::chrono::steady_clock::now();
    const TextEmbedding cond_src = b.embed_text(cfg.source_prompt);
    SemanticMatcher matcher(cfg.transfer.matching_mode, cfg.backend.dift_layer,
                            cfg.backend.dift_timestep, cfg.match_score_threshold);

    json steps = json::array();
    std::optional<ObjectMask> mask;
    std::string mask_source = "attention";
    Latent x = src.entries[0].latent;

    staged("denoise", [&] {
        if (cfg.transfer.matching_mode == MatchingMode::Initial) {
            // Initial mode matches the clean input encodings once.
            Latent enc_src = b.encode_image(source_img);
            Latent enc_tar = b.encode_image(target_img);
            matcher.step(enc_src, enc_tar, cfg.backend.dift_timestep, b);
        }

        const int n = s.num_sample_steps();
        for (int i = 0; i + 1 < n; ++i) {
            const int t = s.timestep_at(i);
            const int t_next = s.timestep_at(i + 1);
            const TextEmbedding& uncond = *src.entries[i].uncond;
            const Latent eps = b.predict_noise(x, t, cond_src, uncond,
                                               cfg.replay_guidance_scale);

            json rec = {{"index", i}, {"timestep", t}};
            const bool in_window =
                i >= cfg.transfer.start_step && i < cfg.transfer.end_step;
            if (!in_window) {
                x = ddim_step(x, eps, t, t_next, s);
                rec["deviated"] = false;
                steps.push_back(std::move(rec));
                continue;
            }

            const Latent x0_cur = predict_x0(x, eps, t, s);
            const Latent& x0_tar = tar.entries[i].predicted_x0;

            if (!mask) {
                if (cfg.mask_override) {
                    mask = load_mask_override(*cfg.mask_override, x.height, x.width);
                    mask_source = "override";
                } else {
                    const AttentionCapture cap =
                        b.capture_cross_attention(x, t, cond_src, object_tokens);
                    mask = extract_object_mask({cap}, object_tokens,
                                               cfg.transfer.mask_threshold);
                }
            }

            CorrelationMap cmap = matcher.step(x0_cur, x0_tar, t, b);
            cmap = upsample_correlation(cmap, x.height, x.width);
            const Latent aligned = apply_correlation(cmap, x0_tar);
            const Latent x0_prime = transfer_x0(x0_cur, aligned, *mask, cfg.transfer.delta);
            const Latent tdelta = transfer_delta(x0_prime, x0_cur);

            NoiseContext ctx;
            ctx.cond = &cond_src;
            ctx.uncond = &uncond;
            ctx.guidance_scale = cfg.replay_guidance_scale;
            const DeviationStep dev = deviation_step(x, x0_cur, tdelta, eps, t, t_next, i,
                                                     cfg.transfer, s, b, ctx);

            double shift_sum = 0.0;
            float shift_max = 0.0f;
            for (float v : tdelta.data) {
                shift_sum += std::fabs(v);
                shift_max = std::max(shift_max, std::fabs(v));
            }
            double score_sum = 0.0;
            for (float v : cmap.score) {
                score_sum += v;
            }
            rec["deviated"] = true;
            rec["delta"] = cfg.transfer.delta;
            rec["lambda"] = cfg.transfer.lambda_;
            rec["gamma"] = cfg.transfer.gamma;
            rec["matching"] = to_string(cfg.transfer.matching_mode);
            rec["mask_active"] = mask->active_count();
            rec["mean_abs_shift"] = shift_sum / tdelta.size();
            rec["max_abs_shift"] = shift_max;
            rec["mean_match_score"] = score_sum / cmap.score.size();
            steps.push_back(std::move(rec));

            if (cfg.dump_diagnostics) {
                dump_latent(diag_dir, i, "x_t", dev.x_t);
                dump_latent(diag_dir, i, "x_t_prime", dev.x_t_prime);
                dump_latent(diag_dir, i, "x_t_star", dev.x_t_star);
                dump_latent(diag_dir, i, "eps_xt", dev.eps_xt);
                dump_latent(diag_dir, i, "eps_xt_prime", dev.eps_xt_prime);
                dump_latent(diag_dir, i, "eps_star", dev.eps_star);
                dump_latent(diag_dir, i, "x_prev_star", dev.x_prev_star);
                dump_latent(diag_dir, i, "tdelta", tdelta);
                dump_latent(diag_dir, i, "x0", x0_cur);
            }
            if (cfg.dump_matching) {
                ArchivedArray a;
                a.shape = {cmap.height, cmap.width};
                a.role = "mapping";
                a.timestep = t;
                a.values.assign(cmap.target_index.begin(), cmap.target_index.end());
                char name[48];
                std::snprintf(name, sizeof(name), "step_%03d_mapping.x0ta", i);
                fs::create_directories(out_dir / "matching");
                write_archive(a, (out_dir / "matching" / name).string());
            }

            x = dev.x_prev_star;
        }
        return 0;
    });
    timings["denoise_s"] = seconds_since(t_stage);

    t_stage = std::chrono::steady_clock::now();
    RunResult result;
    result.final_latent = x;
    result.output_image = staged("decode", [&] { return b.decode_latent(x); });
    timings["decode_s"] = seconds_since(t_stage);

    staged("write-outputs", [&] {
        result.output_png = (out_dir / "output.png").string();
        save_png(result.output_image, result.output_png);

        if (cfg.export_mask || cfg.mask_override) {
            if (mask) {
                std::vector<float> vals(mask->data.begin(), mask->data.end());
                save_png_gray(vals, mask->height, mask->width,
                              (out_dir / "mask.png").string());
            }
        }

        json manifest = {
            {"config", cfg.to_json()},
            {"schedule", {{"timesteps", s.timesteps()}}},
            {"source_inversion",
             {{"residuals", src.residuals},
              {"cache_key",
               TrajectoryCache::key_of(source_cache_descriptor(cfg, source_img))}}},
            {"target_inversion",
             {{"residuals", tar.residuals},
              {"cache_key",
               TrajectoryCache::key_of(target_cache_descriptor(cfg, target_img))}}},
            {"steps", steps},
            {"output",
             {{"png", "output.png"},
              {"latent_sha256",
               sha256_hex(x.data.data(), x.data.size() * sizeof(float))}}},
        };
        if (mask) {
            manifest["mask"] = {{"source", mask_source},
                                {"threshold", cfg.transfer.mask_threshold},
                                {"token_indices", object_tokens},
                                {"active", mask->active_count()}};
        }
        result.manifest = std::move(manifest);
        result.manifest_path = (out_dir / "manifest.json").string();
        std::ofstream mf(result.manifest_path);
        mf << result.manifest.dump(2) << "\n";
        return 0;
    });

    result.total_seconds = seconds_since(t_start);
    timings["total_s"] = result.total_seconds;
    result.timings = timings;
    {
        std::ofstream tf((out_dir / "timings.json").string());
        tf << timings.dump(2) << "\n";
    }
    return result;
}

}  // namespace x0t
