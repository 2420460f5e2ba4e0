#pragma once

#include <string>
#include <vector>

#include "x0t/backend.hpp"
#include "x0t/image.hpp"
#include "x0t/schedule.hpp"
#include "x0t/trajectory.hpp"

namespace x0t {

struct NullTextConfig {
    int iterations_per_step = 10;
    float learning_rate = 1e-2f;
    float early_stop_epsilon = 1e-5f;

    void validate() const;
};

struct InversionOptions {
    // Guidance used while building the inversion path itself.
    float pivot_guidance_scale = 1.0f;
    // Per-step fixed-point refinement of the inverse step so the path is
    // consistent with a forward replay; 1 = plain single-prediction inversion.
    int fixed_point_iterations = 25;
    float fixed_point_tolerance = 1e-7f;

    std::string describe() const;
};

// DDIM inversion of `image` under `prompt`: clean latent up to the noisiest
// step, with eps and predicted x0 recorded per step.
LatentTrajectory ddim_invert(const ImageRgb& image, const std::string& prompt,
                             const Schedule& s, Backend& b,
                             const InversionOptions& opts = {});

// Pivotal inversion of the source image: builds the pivot path, then
// per step optimizes the unconditional embedding (warm-started from the
// previous step) until one guided DDIM step from each pivot reproduces the
// next pivot within early_stop_epsilon. Non-convergence is a warning with
// the residual recorded, not a failure.
LatentTrajectory null_text_invert(const ImageRgb& image, const std::string& prompt,
                                  const Schedule& s, Backend& b,
                                  const NullTextConfig& cfg = {},
                                  const InversionOptions& opts = {},
                                  float replay_guidance_scale = 1.0f);

// Full denoising replay of a trajectory from its noisiest entry; with no
// deviation applied this lands on the trajectory's own clean latent.
Latent replay_reconstruction(const LatentTrajectory& traj, const Schedule& s, Backend& b);

// Freshly measured per-transition replay residuals (infinity norm).
std::vector<float> per_step_replay_residuals(const LatentTrajectory& traj, const Schedule& s,
                                             Backend& b);

}  // namespace x0t
