#include "x0t/deviation.hpp"

#include <cmath>

#include "x0t/errors.hpp"

namespace x0t {

Latent deviate_latent(const Latent& x_t, const Latent& tdelta, int t, const Schedule& s) {
    require_same_shape(x_t, tdelta, "deviate_latent");
    const float sa = std::sqrt(s.alpha_bar(t));
    Latent out(x_t.channels, x_t.height, x_t.width);
    out.step = t;
    for (size_t i = 0; i < x_t.size(); ++i) {
        out.data[i] = x_t.data[i] + sa * tdelta.data[i];
    }
    return out;
}

Latent deviate_latent_from_x0(const Latent& x0, const Latent& tdelta, const Latent& eps_xt,
                              int t, const Schedule& s) {
    require_same_shape(x0, tdelta, "deviate_latent_from_x0");
    require_same_shape(x0, eps_xt, "deviate_latent_from_x0");
    const float a = s.alpha_bar(t);
    const float sa = std::sqrt(a);
    const float sig = std::sqrt(1.0f - a);
    Latent out(x0.channels, x0.height, x0.width);
    out.step = t;
    for (size_t i = 0; i < x0.size(); ++i) {
        out.data[i] = sa * (x0.data[i] + tdelta.data[i]) + sig * eps_xt.data[i];
    }
    return out;
}

Latent blend_latent(const Latent& x_t, const Latent& x_t_prime, float lambda_) {
    if (!(lambda_ >= 0.0f && lambda_ <= 1.0f)) {
        throw DomainError("blend_latent: lambda must be in [0, 1]");
    }
    return blend_toward(x_t, x_t_prime, lambda_);
}

Latent blend_noise(const Latent& eps_xt, const Latent& eps_xt_prime, float gamma) {
    if (!(gamma >= 0.0f && gamma <= 1.0f)) {
        throw DomainError("blend_noise: gamma must be in [0, 1]");
    }
    return blend_toward(eps_xt, eps_xt_prime, gamma);
}

DeviationStep deviation_step(const Latent& x_t, const Latent& x0, const Latent& tdelta,
                             const Latent& eps_xt, int t, int t_prev, int step_index,
                             const TransferParams& params, const Schedule& s, Backend& b,
                             const NoiseContext& ctx) {
    if (step_index < params.start_step || step_index >= params.end_step) {
        throw ContractError("deviation_step: step index " + std::to_string(step_index) +
                            " outside the [" + std::to_string(params.start_step) + ", " +
                            std::to_string(params.end_step) + ") window");
    }
    if (!ctx.cond || !ctx.uncond) {
        throw ContractError("deviation_step: noise context is incomplete");
    }
    require_same_shape(x_t, x0, "deviation_step");
    require_same_shape(x_t, tdelta, "deviation_step");
    require_same_shape(x_t, eps_xt, "deviation_step");

    DeviationStep out;
    out.t = t;
    out.x_t = x_t;
    out.eps_xt = eps_xt;
    out.x_t_prime = deviate_latent(x_t, tdelta, t, s);
    out.eps_xt_prime = b.predict_noise(out.x_t_prime, t, *ctx.cond, *ctx.uncond,
                                       ctx.guidance_scale);
    out.x_t_star = blend_latent(x_t, out.x_t_prime, params.lambda_);
    out.eps_star = blend_noise(eps_xt, out.eps_xt_prime, params.gamma);
    out.x_prev_star = ddim_step(out.x_t_star, out.eps_star, t, t_prev, s);
    return out;
}

Latent closed_form_step(const Latent& x0, const Latent& tdelta, const Latent& eps_xt,
                        const Latent& eps_star, int t, int t_prev, float lambda_,
                        const Schedule& s) {
    require_same_shape(x0, tdelta, "closed_form_step");
    require_same_shape(x0, eps_xt, "closed_form_step");
    require_same_shape(x0, eps_star, "closed_form_step");
    if (!(lambda_ >= 0.0f && lambda_ <= 1.0f)) {
        throw DomainError("closed_form_step: lambda must be in [0, 1]");
    }
    const float a_t = s.alpha_bar(t);
    const float a_prev = s.alpha_bar(t_prev);
    if (a_prev < a_t) {
        throw ScheduleError("closed_form_step: t_prev is noisier than t");
    }

    const float sa_prev = std::sqrt(a_prev);
    const float sig_prev = std::sqrt(1.0f - a_prev);
    const float carry = std::sqrt(a_prev * (1.0f - a_t) / a_t);
    const float shift = 1.0f - lambda_;

    Latent out(x0.channels, x0.height, x0.width);
    out.step = t_prev;
    for (size_t i = 0; i < x0.size(); ++i) {
        out.data[i] = sa_prev * (x0.data[i] + shift * tdelta.data[i]) +
                      sig_prev * eps_star.data[i] +
                      carry * (eps_xt.data[i] - eps_star.data[i]);
    }
    return out;
}

}  // namespace x0t
