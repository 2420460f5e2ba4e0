#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "x0t/backend.hpp"
#include "x0t/image.hpp"
#include "x0t/inversion.hpp"
#include "x0t/schedule.hpp"
#include "x0t/transfer.hpp"

namespace x0t {

// A pipeline stage failure, tagged with the stage it happened in.
struct StageError : std::runtime_error {
    StageError(std::string stage_name, const std::string& message)
        : std::runtime_error("stage '" + stage_name + "': " + message),
          stage(std::move(stage_name)) {}
    std::string stage;
};

struct ScheduleConfig {
    int num_sample_steps = kDefaultSampleSteps;
    int train_steps = kDefaultTrainSteps;
    float beta_start = 0.00085f;
    float beta_end = 0.012f;

    Schedule build() const {
        return Schedule::uniform(num_sample_steps, train_steps, beta_start, beta_end);
    }
};

// Everything one transfer run needs. Defaults follow the library defaults:
// delta 0.6, lambda 0.2, gamma 0.2, window [12, 21), progressive matching.
struct RunConfig {
    std::string source_image;
    std::string target_image;
    std::string source_prompt;
    std::string target_prompt;
    std::string object_word;

    TransferParams transfer;
    ScheduleConfig schedule;
    BackendConfig backend;
    NullTextConfig null_text;
    InversionOptions inversion;
    float replay_guidance_scale = 1.0f;
    std::optional<float> match_score_threshold;

    std::string cache_dir;  // empty: $X0T_CACHE_DIR, else <out_dir>/cache
    std::string out_dir = "out";
    uint64_t seed = 1234;
    bool use_cache = true;
    bool export_mask = false;
    bool dump_diagnostics = false;
    bool dump_matching = false;
    std::optional<std::string> mask_override;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_json_file(const std::string& path);
    nlohmann::json to_json() const;

    // ConfigError on missing files, empty prompts, an object word absent from
    // the source prompt, or out-of-range parameters.
    void validate() const;

    std::string resolved_cache_dir() const;
    // The run seed feeds the mock backend.
    BackendConfig resolved_backend() const;
};

struct RunResult {
    ImageRgb output_image;
    Latent final_latent;
    std::string output_png;
    std::string manifest_path;
    nlohmann::json manifest;
    nlohmann::json timings;
    double total_seconds = 0.0;
};

// The full method: source null-text inversion, target DDIM inversion with
// per-step predicted x0, then a denoising pass that matches, masks, transfers
// and deviates inside the [start_step, end_step) window and replays plain
// DDIM steps outside it. Deterministic given config and seed.
RunResult run_transfer(const RunConfig& cfg);

// Cached-or-computed inversions, shared with the invert CLI command.
// `cache_hit` reports whether the trajectory came from the cache.
LatentTrajectory obtain_source_trajectory(const RunConfig& cfg, const ImageRgb& image,
                                          const Schedule& s, Backend& b, bool* cache_hit);
LatentTrajectory obtain_target_trajectory(const RunConfig& cfg, const ImageRgb& image,
                                          const Schedule& s, Backend& b, bool* cache_hit);

std::string source_cache_descriptor(const RunConfig& cfg, const ImageRgb& image);
std::string target_cache_descriptor(const RunConfig& cfg, const ImageRgb& image);

}  // namespace x0t
