#pragma once

#include <string>
#include <vector>

#include "x0t/latent.hpp"

namespace x0t {

inline constexpr int kDefaultSampleSteps = 50;
inline constexpr int kDefaultTrainSteps = 1000;

// DDIM timestep grid with the cumulative signal coefficient a_t per timestep.
// Every sqrt(a_t) factor used anywhere in the library is looked up here;
// nothing recomputes the schedule independently.
class Schedule {
public:
    // Uniform-stride descending grid over [0, train_steps), ending at t=0
    // where a is pinned to exactly 1 (the clean sample). Coefficients follow
    // the scaled-linear beta convention of pretrained latent diffusion models.
    static Schedule uniform(int num_sample_steps = kDefaultSampleSteps,
                            int train_steps = kDefaultTrainSteps,
                            float beta_start = 0.00085f,
                            float beta_end = 0.012f);

    // Arbitrary grid, mainly for tests. `alphas` aligned with `timesteps`
    // (strictly descending); alphas must be in (0, 1] and strictly increasing
    // as the timestep decreases.
    static Schedule from_alphas(std::vector<int> timesteps, std::vector<float> alphas);

    int num_sample_steps() const { return static_cast<int>(timesteps_.size()); }
    const std::vector<int>& timesteps() const { return timesteps_; }
    int timestep_at(int index) const;
    int train_steps() const { return train_steps_; }

    // Index of `timestep` in the descending grid; ScheduleError if absent.
    int index_of(int timestep) const;
    float alpha_bar(int timestep) const;

    // Stable JSON string of the construction parameters, for cache keys.
    std::string describe() const;

private:
    std::vector<int> timesteps_;
    std::vector<float> alpha_bar_;
    int train_steps_ = kDefaultTrainSteps;
    std::string describe_;
};

// x0 = (x_t - sqrt(1-a_t)*eps) / sqrt(a_t)
Latent predict_x0(const Latent& x_t, const Latent& eps, int t, const Schedule& s);

// x_t = sqrt(a_t)*x0 + sqrt(1-a_t)*eps
Latent compose_latent(const Latent& x0, const Latent& eps, int t, const Schedule& s);

// Deterministic DDIM update toward less noise. `t_prev` must be no noisier
// than `t`; equal timesteps are the identity.
Latent ddim_step(const Latent& x_t, const Latent& eps, int t, int t_prev, const Schedule& s);

// Deterministic reversal of ddim_step. `t_next` must be no less noisy than
// `t`; mutual inverse of ddim_step under a shared eps.
Latent ddim_inverse_step(const Latent& x_t, const Latent& eps, int t, int t_next,
                         const Schedule& s);

}  // namespace x0t
