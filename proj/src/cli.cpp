#include "x0t/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "x0t/archive.hpp"
#include "x0t/cache.hpp"
#include "x0t/errors.hpp"
#include "x0t/evaluation.hpp"
#include "x0t/log.hpp"
#include "x0t/matching.hpp"
#include "x0t/pipeline.hpp"

namespace x0t {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

// Shared flag set; every flag has a config-file equivalent and wins over it.
struct CommonFlags {
    std::string config_path;
    std::string source, target, source_prompt, target_prompt, object_word;
    float delta = 0, lambda = 0, gamma = 0;
    int start_step = 0, end_step = 0;
    std::string matching, backend_kind;
    std::string cache_dir, out_dir;
    uint64_t seed = 0;
    std::string mask_override;
    bool dump_diagnostics = false;
    bool dump_matching = false;
    bool export_mask = false;
    bool no_cache = false;

    CLI::Option* o_source = nullptr;
    CLI::Option* o_target = nullptr;
    CLI::Option* o_source_prompt = nullptr;
    CLI::Option* o_target_prompt = nullptr;
    CLI::Option* o_object_word = nullptr;
    CLI::Option* o_delta = nullptr;
    CLI::Option* o_lambda = nullptr;
    CLI::Option* o_gamma = nullptr;
    CLI::Option* o_start = nullptr;
    CLI::Option* o_end = nullptr;
    CLI::Option* o_matching = nullptr;
    CLI::Option* o_backend = nullptr;
    CLI::Option* o_cache_dir = nullptr;
    CLI::Option* o_out_dir = nullptr;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_mask_override = nullptr;

    void attach(CLI::App& app) {
        app.add_option("--config", config_path, "JSON run configuration");
        o_source = app.add_option("--source", source, "source image (PNG)");
        o_target = app.add_option("--target", target, "target image (PNG)");
        o_source_prompt = app.add_option("--source-prompt", source_prompt, "source prompt");
        o_target_prompt = app.add_option("--target-prompt", target_prompt, "target prompt");
        o_object_word = app.add_option("--object-word", object_word, "primary object word");
        o_delta = app.add_option("--delta", delta, "transfer weight in [0,1]");
        o_lambda = app.add_option("--lambda", lambda, "latent blend weight in [0,1]");
        o_gamma = app.add_option("--gamma", gamma, "noise blend weight in [0,1]");
        o_start = app.add_option("--start-step", start_step, "first deviated step index");
        o_end = app.add_option("--end-step", end_step, "one past the last deviated step");
        o_matching = app.add_option("--matching", matching, "matching mode")
                         ->check(CLI::IsMember({"progressive", "initial"}));
        o_backend = app.add_option("--backend", backend_kind, "backend kind")
                        ->check(CLI::IsMember({"mock", "diffusion"}));
        o_cache_dir = app.add_option("--cache-dir", cache_dir,
                                     "trajectory cache directory (default $X0T_CACHE_DIR)");
        o_out_dir = app.add_option("--out-dir", out_dir, "output directory");
        o_seed = app.add_option("--seed", seed, "run seed (also seeds the mock backend)");
        o_mask_override = app.add_option("--mask-override", mask_override,
                                         "binary PNG mask replacing attention extraction");
        app.add_flag("--dump-diagnostics", dump_diagnostics,
                     "dump per-step deviation arrays as X0TA archives");
        app.add_flag("--dump-matching", dump_matching,
                     "dump the per-step correlation mapping as X0TA archives");
        app.add_flag("--export-mask", export_mask, "write the object mask PNG");
        app.add_flag("--no-cache", no_cache, "bypass the trajectory cache");
    }

    RunConfig to_config() const {
        RunConfig cfg;
        if (!config_path.empty()) {
            cfg = RunConfig::from_json_file(config_path);
        }
        if (*o_source) cfg.source_image = source;
        if (*o_target) cfg.target_image = target;
        if (*o_source_prompt) cfg.source_prompt = source_prompt;
        if (*o_target_prompt) cfg.target_prompt = target_prompt;
        if (*o_object_word) cfg.object_word = object_word;
        if (*o_delta) cfg.transfer.delta = delta;
        if (*o_lambda) cfg.transfer.lambda_ = lambda;
        if (*o_gamma) cfg.transfer.gamma = gamma;
        if (*o_start) cfg.transfer.start_step = start_step;
        if (*o_end) cfg.transfer.end_step = end_step;
        if (*o_matching) cfg.transfer.matching_mode = matching_mode_from_string(matching);
        if (*o_backend) cfg.backend.kind = backend_kind;
        if (*o_cache_dir) cfg.cache_dir = cache_dir;
        if (*o_out_dir) cfg.out_dir = out_dir;
        if (*o_seed) {
            cfg.seed = seed;
            cfg.backend.mock.seed = seed;
        }
        if (*o_mask_override) cfg.mask_override = mask_override;
        if (dump_diagnostics) cfg.dump_diagnostics = true;
        if (dump_matching) cfg.dump_matching = true;
        if (export_mask) cfg.export_mask = true;
        if (no_cache) cfg.use_cache = false;
        return cfg;
    }
};

int cmd_transfer(const CommonFlags& flags) {
    const RunConfig cfg = flags.to_config();
    const RunResult result = run_transfer(cfg);
    std::printf("output:   %s\n", result.output_png.c_str());
    std::printf("manifest: %s\n", result.manifest_path.c_str());
    std::printf("done in %.3f s\n", result.total_seconds);
    return kExitOk;
}

int cmd_invert(const CommonFlags& flags, bool invert_target) {
    RunConfig cfg = flags.to_config();
    const std::string image_path = invert_target ? cfg.target_image : cfg.source_image;
    const std::string prompt = invert_target ? cfg.target_prompt : cfg.source_prompt;
    if (image_path.empty() || !fs::exists(image_path)) {
        throw ConfigError("image not found: '" + image_path + "'");
    }
    if (prompt.empty()) {
        throw ConfigError("prompt must be non-empty");
    }

    const Schedule s = cfg.schedule.build();
    auto backend = make_backend(cfg.resolved_backend());
    const ImageRgb image = load_png(image_path);

    bool cache_hit = false;
    const LatentTrajectory traj =
        invert_target ? obtain_target_trajectory(cfg, image, s, *backend, &cache_hit)
                      : obtain_source_trajectory(cfg, image, s, *backend, &cache_hit);
    const std::string descriptor = invert_target ? target_cache_descriptor(cfg, image)
                                                 : source_cache_descriptor(cfg, image);
    const std::string key = TrajectoryCache::key_of(descriptor);

    std::printf("%s %s inversion, key %s\n", cache_hit ? "cache hit:" : "computed:",
                invert_target ? "target" : "source", key.c_str());
    for (int i = 0; i < traj.num_steps(); ++i) {
        const float resid = i < static_cast<int>(traj.residuals.size()) ? traj.residuals[i]
                                                                        : 0.0f;
        std::printf("step %3d  t=%4d  residual=%.3e\n", i, traj.entries[i].timestep, resid);
    }
    return kExitOk;
}

int cmd_match_debug(const CommonFlags& flags, const std::string& layer_flag) {
    RunConfig cfg = flags.to_config();
    if (cfg.source_image.empty() || !fs::exists(cfg.source_image)) {
        throw ConfigError("source image not found: '" + cfg.source_image + "'");
    }
    if (cfg.target_image.empty() || !fs::exists(cfg.target_image)) {
        throw ConfigError("target image not found: '" + cfg.target_image + "'");
    }
    auto backend = make_backend(cfg.resolved_backend());
    const std::string layer = layer_flag.empty() ? cfg.backend.dift_layer : layer_flag;

    const Latent enc_src = backend->encode_image(load_png(cfg.source_image));
    const Latent enc_tar = backend->encode_image(load_png(cfg.target_image));
    const int t = cfg.backend.dift_timestep;
    const FeatureMap fs_ = backend->extract_dift_features(enc_src, t, layer);
    const FeatureMap ft = backend->extract_dift_features(enc_tar, t, layer);

    const std::vector<float> sim = cosine_similarity_field(fs_, ft);
    const CorrelationMap map = build_correlation_map(fs_, ft);

    fs::create_directories(cfg.out_dir);
    ArchivedArray sim_a;
    sim_a.shape = {fs_.height, fs_.width, ft.height, ft.width};
    sim_a.role = "similarity";
    sim_a.timestep = t;
    sim_a.values = sim;
    write_archive(sim_a, (fs::path(cfg.out_dir) / "similarity.x0ta").string());

    ArchivedArray map_a;
    map_a.shape = {map.height, map.width};
    map_a.role = "mapping";
    map_a.timestep = t;
    map_a.values.assign(map.target_index.begin(), map.target_index.end());
    write_archive(map_a, (fs::path(cfg.out_dir) / "mapping.x0ta").string());

    double mean_score = 0.0;
    for (float v : map.score) {
        mean_score += v;
    }
    mean_score /= map.score.size();
    std::printf("similarity field %dx%dx%dx%d, mean best score %.4f\n", fs_.height, fs_.width,
                ft.height, ft.width, mean_score);
    std::printf("wrote %s and %s under %s\n", "similarity.x0ta", "mapping.x0ta",
                cfg.out_dir.c_str());
    return kExitOk;
}

int cmd_evaluate(const std::string& pairs_path, const std::string& out_dir, bool csv_only,
                 uint64_t seed) {
    const std::vector<EvalPair> pairs = load_pairs_manifest(pairs_path);
    auto embedder = make_mock_clip_embedder(seed);
    const EvalReport report = evaluate_pairs(pairs, *embedder);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    {
        std::ofstream csv(dir / "report.csv");
        csv << report.to_csv();
    }
    if (!csv_only) {
        std::ofstream js(dir / "report.json");
        js << report.to_json();
    }
    std::printf("pairs: %zu scored: %d mean_clip_t2i: %.4f mean_clip_i2i: %.4f\n",
                report.entries.size(), report.scored_count, report.mean_clip_t2i,
                report.mean_clip_i2i);
    return kExitOk;
}

std::string default_cache_dir(const std::string& flag_value) {
    if (!flag_value.empty()) {
        return flag_value;
    }
    if (const char* env = std::getenv("X0T_CACHE_DIR"); env && *env) {
        return env;
    }
    return "out/cache";
}

int cmd_cache(const std::string& action, const std::string& cache_dir) {
    const std::string dir = default_cache_dir(cache_dir);
    if (action == "path") {
        std::printf("%s\n", dir.c_str());
        return kExitOk;
    }
    TrajectoryCache cache(dir);
    if (action == "list") {
        for (const std::string& key : cache.list()) {
            std::printf("%s\n", key.c_str());
        }
        return kExitOk;
    }
    if (action == "clear") {
        cache.clear();
        std::printf("cleared %s\n", dir.c_str());
        return kExitOk;
    }
    throw ConfigError("unknown cache action: " + action);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"fine-grained appearance transfer in the predicted-x0 space"};
    app.require_subcommand(1);

    CLI::App* transfer = app.add_subcommand("transfer", "run the full appearance transfer");
    CommonFlags tf;
    tf.attach(*transfer);

    CLI::App* invert = app.add_subcommand("invert", "compute and cache an inversion");
    CommonFlags inv;
    inv.attach(*invert);
    bool invert_target = false;
    invert->add_flag("--invert-target", invert_target,
                     "invert the target image instead of the source");

    CLI::App* match = app.add_subcommand("match-debug", "dump the similarity field and mapping");
    CommonFlags mf;
    mf.attach(*match);
    std::string match_layer;
    match->add_option("--layer", match_layer, "feature layer");

    CLI::App* evaluate = app.add_subcommand("evaluate", "score outputs with the embedder");
    std::string pairs_path, eval_out = "out";
    bool csv_only = false;
    uint64_t eval_seed = 7;
    evaluate->add_option("--pairs", pairs_path, "pairs manifest JSON")->required();
    evaluate->add_option("--out-dir", eval_out, "report directory");
    evaluate->add_flag("--csv-only", csv_only, "suppress the JSON report");
    evaluate->add_option("--seed", eval_seed, "embedder seed");

    CLI::App* cache = app.add_subcommand("cache", "inspect or clear the trajectory cache");
    std::string cache_action, cache_dir_flag;
    cache->add_option("action", cache_action, "list | clear | path")
        ->required()
        ->check(CLI::IsMember({"list", "clear", "path"}));
    cache->add_option("--cache-dir", cache_dir_flag, "cache directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*transfer) {
            return cmd_transfer(tf);
        }
        if (*invert) {
            return cmd_invert(inv, invert_target);
        }
        if (*match) {
            return cmd_match_debug(mf, match_layer);
        }
        if (*evaluate) {
            return cmd_evaluate(pairs_path, eval_out, csv_only, eval_seed);
        }
        if (*cache) {
            return cmd_cache(cache_action, cache_dir_flag);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const StageError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitFailure;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitConfig;
}

}  // namespace x0t
