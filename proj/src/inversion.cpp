#include "x0t/inversion.hpp"

#include <cmath>
#include <sstream>

#include "x0t/errors.hpp"
#include "x0t/log.hpp"

namespace x0t {

bool LatentTrajectory::carries_uncond() const {
    for (const auto& e : entries) {
        if (!e.uncond) {
            return false;
        }
    }
    return !entries.empty();
}

void LatentTrajectory::require_matches(const Schedule& s) const {
    if (num_steps() != s.num_sample_steps()) {
        throw ContractError("trajectory has " + std::to_string(num_steps()) +
                            " entries, schedule has " + std::to_string(s.num_sample_steps()));
    }
    for (int i = 0; i < num_steps(); ++i) {
        if (entries[i].timestep != s.timestep_at(i)) {
            throw ContractError("trajectory timestep mismatch at index " + std::to_string(i));
        }
    }
}

void NullTextConfig::validate() const {
    if (iterations_per_step <= 0 || !(learning_rate > 0.0f) || !(early_stop_epsilon > 0.0f)) {
        throw ConfigError("null-text config values must be positive");
    }
}

std::string InversionOptions::describe() const {
    std::ostringstream os;
    os << "{\"pivot_guidance_scale\":" << pivot_guidance_scale
       << ",\"fixed_point_iterations\":" << fixed_point_iterations
       << ",\"fixed_point_tolerance\":" << fixed_point_tolerance << "}";
    return os.str();
}

namespace {

// Shared inversion walk: clean encoding at the last schedule step, inverse
// steps toward the noisiest. Residuals are the measured forward-replay error
// of each transition.
LatentTrajectory build_inversion_path(const ImageRgb& image, const std::string& prompt,
                                      const Schedule& s, Backend& b,
                                      const InversionOptions& opts) {
    if (opts.fixed_point_iterations < 1) {
        throw ConfigError("fixed_point_iterations must be >= 1");
    }
    const TextEmbedding cond = b.embed_text(prompt);
    const TextEmbedding uncond = b.embed_text("");
    const float g = opts.pivot_guidance_scale;
    const int n = s.num_sample_steps();

    LatentTrajectory traj;
    traj.prompt = prompt;
    traj.guidance_scale = g;
    traj.entries.resize(n);
    traj.residuals.assign(n - 1, 0.0f);

    {
        const int t_clean = s.timestep_at(n - 1);
        TrajectoryEntry& e = traj.entries[n - 1];
        e.timestep = t_clean;
        e.latent = b.encode_image(image);
        e.latent.step = t_clean;
        e.eps = b.predict_noise(e.latent, t_clean, cond, uncond, g);
        e.predicted_x0 = predict_x0(e.latent, e.eps, t_clean, s);
    }

    for (int j = n - 1; j >= 1; --j) {
        const int t_clean = s.timestep_at(j);
        const int t_noisy = s.timestep_at(j - 1);
        const Latent& x_clean = traj.entries[j].latent;

        // Plain first guess: prediction at the current point and timestep.
        Latent eps = b.predict_noise(x_clean, t_clean, cond, uncond, g);
        Latent x_cand = ddim_inverse_step(x_clean, eps, t_clean, t_noisy, s);

        // Fixed-point refinement at the noisier point, so a forward step from
        // x_cand with its own prediction lands back on x_clean.
        for (int k = 1; k < opts.fixed_point_iterations; ++k) {
            eps = b.predict_noise(x_cand, t_noisy, cond, uncond, g);
            Latent refined = ddim_inverse_step(x_clean, eps, t_clean, t_noisy, s);
            const float moved = max_abs_diff(refined, x_cand);
            x_cand = std::move(refined);
            if (moved <= opts.fixed_point_tolerance) {
                break;
            }
        }

        TrajectoryEntry& e = traj.entries[j - 1];
        e.timestep = t_noisy;
        e.latent = std::move(x_cand);
        e.latent.step = t_noisy;
        e.eps = eps;
        e.predicted_x0 = predict_x0(e.latent, e.eps, t_noisy, s);
        if (!all_finite(e.latent)) {
            throw BackendError("inversion produced non-finite latent at t=" +
                               std::to_string(t_noisy));
        }

        // Measured forward-replay residual of this transition.
        const Latent eps_fwd = b.predict_noise(e.latent, t_noisy, cond, uncond, g);
        traj.residuals[j - 1] =
            max_abs_diff(ddim_step(e.latent, eps_fwd, t_noisy, t_clean, s), x_clean);
    }
    return traj;
}

}  // namespace

LatentTrajectory ddim_invert(const ImageRgb& image, const std::string& prompt,
                             const Schedule& s, Backend& b, const InversionOptions& opts) {
    LatentTrajectory traj = build_inversion_path(image, prompt, s, b, opts);
    traj.kind = TrajectoryKind::Target;
    return traj;
}

LatentTrajectory null_text_invert(const ImageRgb& image, const std::string& prompt,
                                  const Schedule& s, Backend& b, const NullTextConfig& cfg,
                                  const InversionOptions& opts, float replay_guidance_scale) {
    cfg.validate();
    LatentTrajectory traj = build_inversion_path(image, prompt, s, b, opts);
    traj.kind = TrajectoryKind::Source;
    traj.guidance_scale = replay_guidance_scale;

    const TextEmbedding cond = b.embed_text(prompt);
    TextEmbedding u = b.embed_text("");
    const int n = traj.num_steps();
    const float g = replay_guidance_scale;
    bool warned_no_grad = false;

    for (int i = 0; i + 1 < n; ++i) {
        const int t = traj.entries[i].timestep;
        const int t_prev = traj.entries[i + 1].timestep;
        const Latent& pivot = traj.entries[i].latent;
        const Latent& target = traj.entries[i + 1].latent;

        // d(step)/d(eps) and d(eps_guided)/d(uncond prediction).
        const float a_t = s.alpha_bar(t);
        const float a_prev = s.alpha_bar(t_prev);
        const float c_eps = std::sqrt(1.0f - a_prev) - std::sqrt(a_prev * (1.0f - a_t) / a_t);
        const float c_uncond = 1.0f - g;

        float resid = 0.0f;
        for (int k = 0; k < cfg.iterations_per_step; ++k) {
            const Latent eps_hat = b.predict_noise(pivot, t, cond, u, g);
            resid = max_abs_diff(ddim_step(pivot, eps_hat, t, t_prev, s), target);
            if (resid < cfg.early_stop_epsilon) {
                break;
            }
            if (!b.supports_embedding_gradient()) {
                if (!warned_no_grad) {
                    log_warn("backend has no embedding gradient; null-text optimization skipped");
                    warned_no_grad = true;
                }
                break;
            }
            const Latent replayed = ddim_step(pivot, eps_hat, t, t_prev, s);
            const Latent cot = scale(sub(replayed, target), 2.0f * c_eps * c_uncond);
            const TextEmbedding grad = b.predict_noise_vjp_uncond(pivot, t, u, cot);
            for (size_t m = 0; m < u.data.size(); ++m) {
                u.data[m] -= cfg.learning_rate * grad.data[m];
            }
            if (k + 1 == cfg.iterations_per_step) {
                // Residual must describe the stored embedding.
                const Latent eps_final = b.predict_noise(pivot, t, cond, u, g);
                resid = max_abs_diff(ddim_step(pivot, eps_final, t, t_prev, s), target);
            }
        }
        if (resid >= cfg.early_stop_epsilon) {
            std::ostringstream os;
            os << "null-text step " << i << " (t=" << t << ") did not converge: residual "
               << resid;
            log_warn(os.str());
        }

        traj.entries[i].uncond = u;
        traj.residuals[i] = resid;
    }
    // The clean entry has no outgoing step; it carries the last embedding so
    // every entry is replayable.
    traj.entries[n - 1].uncond = u;
    return traj;
}

Latent replay_reconstruction(const LatentTrajectory& traj, const Schedule& s, Backend& b) {
    traj.require_matches(s);
    if (traj.kind == TrajectoryKind::Source && !traj.carries_uncond()) {
        throw ContractError("source trajectory is missing unconditional embeddings");
    }
    const TextEmbedding cond = b.embed_text(traj.prompt);
    const TextEmbedding null_uncond = b.embed_text("");

    Latent x = traj.entries[0].latent;
    for (int i = 0; i + 1 < traj.num_steps(); ++i) {
        const TextEmbedding& u = traj.entries[i].uncond ? *traj.entries[i].uncond : null_uncond;
        const Latent eps = b.predict_noise(x, traj.entries[i].timestep, cond, u,
                                           traj.guidance_scale);
        x = ddim_step(x, eps, traj.entries[i].timestep, traj.entries[i + 1].timestep, s);
    }
    return x;
}

std::vector<float> per_step_replay_residuals(const LatentTrajectory& traj, const Schedule& s,
                                             Backend& b) {
    traj.require_matches(s);
    const TextEmbedding cond = b.embed_text(traj.prompt);
    const TextEmbedding null_uncond = b.embed_text("");

    std::vector<float> out(traj.num_steps() - 1, 0.0f);
    for (int i = 0; i + 1 < traj.num_steps(); ++i) {
        const TextEmbedding& u = traj.entries[i].uncond ? *traj.entries[i].uncond : null_uncond;
        const int t = traj.entries[i].timestep;
        const int t_prev = traj.entries[i + 1].timestep;
        const Latent eps = b.predict_noise(traj.entries[i].latent, t, cond, u,
                                           traj.guidance_scale);
        out[i] = max_abs_diff(ddim_step(traj.entries[i].latent, eps, t, t_prev, s),
                              traj.entries[i + 1].latent);
    }
    return out;
}

}  // namespace x0t
