#pragma once

#include "x0t/backend.hpp"
#include "x0t/latent.hpp"
#include "x0t/schedule.hpp"
#include "x0t/transfer.hpp"

namespace x0t {

// Conditioning context of the replay pass; the deviated latent is denoised
// with the same embeddings and guidance scale as the original path.
struct NoiseContext {
    const TextEmbedding* cond = nullptr;
    const TextEmbedding* uncond = nullptr;
    float guidance_scale = 1.0f;
};

// Every intermediate of one deviated denoising step.
struct DeviationStep {
    int t = kNoStep;
    Latent x_t;           // original path point
    Latent x_t_prime;     // x0-shift lifted into the latent
    Latent x_t_star;      // lambda-blended latent
    Latent eps_xt;        // replay noise prediction at x_t
    Latent eps_xt_prime;  // noise prediction at x'_t
    Latent eps_star;      // gamma-blended noise
    Latent x_prev_star;   // next denoising point
};

// x'_t = sqrt(a_t)*(x0 + T) + sqrt(1-a_t)*eps(x_t). Computed as
// x_t + sqrt(a_t)*T, which is the same decomposition and collapses
// bit-exactly to x_t when T == 0.
Latent deviate_latent(const Latent& x_t, const Latent& tdelta, int t, const Schedule& s);

// Same update written from the x0 decomposition (when x_t is not at hand).
Latent deviate_latent_from_x0(const Latent& x0, const Latent& tdelta, const Latent& eps_xt,
                              int t, const Schedule& s);

// lambda*x_t + (1-lambda)*x'_t, collapsing bit-exactly at equal inputs.
Latent blend_latent(const Latent& x_t, const Latent& x_t_prime, float lambda_);

// gamma*eps(x_t) + (1-gamma)*eps(x'_t), same collapse.
Latent blend_noise(const Latent& eps_xt, const Latent& eps_xt_prime, float gamma);

// One full deviated step: lift the x0-space shift, re-predict noise at x'_t
// under `ctx`, blend latent and noise, then DDIM-step to t_prev. `step_index`
// is the denoising-loop index, validated against the params window.
DeviationStep deviation_step(const Latent& x_t, const Latent& x0, const Latent& tdelta,
                             const Latent& eps_xt, int t, int t_prev, int step_index,
                             const TransferParams& params, const Schedule& s, Backend& b,
                             const NoiseContext& ctx);

// Closed form of the same update:
//   sqrt(a_prev)*(x0 + (1-lambda)*T) + sqrt(1-a_prev)*eps*
//     + sqrt(a_prev*(1-a_t)/a_t)*(eps(x_t) - eps*)
// with eps* computed exactly as in deviation_step. Algebraically equal to the
// sequential route; the equivalence is the module's central test.
Latent closed_form_step(const Latent& x0, const Latent& tdelta, const Latent& eps_xt,
                        const Latent& eps_star, int t, int t_prev, float lambda_,
                        const Schedule& s);

}  // namespace x0t
