#include "x0t/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "x0t/errors.hpp"

namespace x0t {

namespace {

std::string describe_uniform(int steps, int train, float beta_start, float beta_end) {
    std::ostringstream os;
    os << "{\"kind\":\"uniform\",\"num_sample_steps\":" << steps << ",\"train_steps\":" << train
       << ",\"beta_start\":" << beta_start << ",\"beta_end\":" << beta_end << "}";
    return os.str();
}

}  // namespace

Schedule Schedule::uniform(int num_sample_steps, int train_steps, float beta_start,
                           float beta_end) {
    if (num_sample_steps < 2 || num_sample_steps > train_steps) {
        throw ScheduleError("uniform schedule: num_sample_steps must be in [2, train_steps]");
    }

    // Scaled-linear betas, cumulative product in double to keep a_t stable.
    std::vector<double> alpha_bar(train_steps);
    const double s0 = std::sqrt(static_cast<double>(beta_start));
    const double s1 = std::sqrt(static_cast<double>(beta_end));
    double cum = 1.0;
    for (int i = 0; i < train_steps; ++i) {
        const double f = train_steps > 1 ? static_cast<double>(i) / (train_steps - 1) : 0.0;
        const double beta = std::pow(s0 + f * (s1 - s0), 2.0);
        cum *= 1.0 - beta;
        alpha_bar[i] = cum;
    }

    const int stride = train_steps / num_sample_steps;
    Schedule s;
    s.train_steps_ = train_steps;
    s.timesteps_.resize(num_sample_steps);
    s.alpha_bar_.resize(num_sample_steps);
    for (int i = 0; i < num_sample_steps; ++i) {
        const int t = (num_sample_steps - 1 - i) * stride;
        s.timesteps_[i] = t;
        // t=0 is the clean sample by convention.
        s.alpha_bar_[i] = t == 0 ? 1.0f : static_cast<float>(alpha_bar[t]);
    }
    s.describe_ = describe_uniform(num_sample_steps, train_steps, beta_start, beta_end);
    return s;
}

Schedule Schedule::from_alphas(std::vector<int> timesteps, std::vector<float> alphas) {
    if (timesteps.empty() || timesteps.size() != alphas.size()) {
        throw ScheduleError("from_alphas: timesteps/alphas size mismatch or empty");
    }
    for (size_t i = 0; i < timesteps.size(); ++i) {
        if (!(alphas[i] > 0.0f && alphas[i] <= 1.0f)) {
            throw ScheduleError("from_alphas: alpha out of (0, 1]");
        }
        if (i > 0) {
            if (timesteps[i] >= timesteps[i - 1]) {
                throw ScheduleError("from_alphas: timesteps not strictly descending");
            }
            if (alphas[i] <= alphas[i - 1]) {
                throw ScheduleError("from_alphas: alphas must increase as timestep decreases");
            }
        }
    }

    Schedule s;
    s.train_steps_ = timesteps.front() + 1;
    std::ostringstream os;
    os << "{\"kind\":\"explicit\",\"timesteps\":[";
    for (size_t i = 0; i < timesteps.size(); ++i) {
        os << (i ? "," : "") << timesteps[i];
    }
    os << "],\"alphas\":[";
    for (size_t i = 0; i < alphas.size(); ++i) {
        os << (i ? "," : "") << alphas[i];
    }
    os << "]}";
    s.describe_ = os.str();
    s.timesteps_ = std::move(timesteps);
    s.alpha_bar_ = std::move(alphas);
    return s;
}

int Schedule::timestep_at(int index) const {
    if (index < 0 || index >= num_sample_steps()) {
        throw ScheduleError("timestep_at: index out of range");
    }
    return timesteps_[index];
}

int Schedule::index_of(int timestep) const {
    // Descending grid: binary search with reversed comparison.
    auto it = std::lower_bound(timesteps_.begin(), timesteps_.end(), timestep,
                               [](int a, int b) { return a > b; });
    if (it == timesteps_.end() || *it != timestep) {
        throw ScheduleError("unknown timestep " + std::to_string(timestep));
    }
    return static_cast<int>(it - timesteps_.begin());
}

float Schedule::alpha_bar(int timestep) const {
    return alpha_bar_[index_of(timestep)];
}

std::string Schedule::describe() const {
    return describe_;
}

Latent predict_x0(const Latent& x_t, const Latent& eps, int t, const Schedule& s) {
    require_same_shape(x_t, eps, "predict_x0");
    const float a = s.alpha_bar(t);
    const float sig = std::sqrt(1.0f - a);
    const float inv_sa = 1.0f / std::sqrt(a);
    Latent out(x_t.channels, x_t.height, x_t.width);
    out.step = t;
    for (size_t i = 0; i < x_t.size(); ++i) {
        out.data[i] = (x_t.data[i] - sig * eps.data[i]) * inv_sa;
    }
    return out;
}

Latent compose_latent(const Latent& x0, const Latent& eps, int t, const Schedule& s) {
    require_same_shape(x0, eps, "compose_latent");
    const float a = s.alpha_bar(t);
    return lincomb(std::sqrt(a), x0, std::sqrt(1.0f - a), eps);
}

Latent ddim_step(const Latent& x_t, const Latent& eps, int t, int t_prev, const Schedule& s) {
    require_same_shape(x_t, eps, "ddim_step");
    const float a_t = s.alpha_bar(t);
    const float a_prev = s.alpha_bar(t_prev);
    if (a_prev < a_t) {
        throw ScheduleError("ddim_step: t_prev is noisier than t");
    }
    if (a_prev == a_t) {
        // Degenerate step: the algebraic result is x_t itself.
        Latent out = x_t;
        out.step = t_prev;
        return out;
    }
    const float ratio = std::sqrt(a_prev / a_t);
    const float sig_t = std::sqrt(1.0f - a_t);
    const float sig_prev = std::sqrt(1.0f - a_prev);
    Latent out(x_t.channels, x_t.height, x_t.width);
    out.step = t_prev;
    for (size_t i = 0; i < x_t.size(); ++i) {
        out.data[i] = ratio * (x_t.data[i] - sig_t * eps.data[i]) + sig_prev * eps.data[i];
    }
    return out;
}

Latent ddim_inverse_step(const Latent& x_t, const Latent& eps, int t, int t_next,
                         const Schedule& s) {
    require_same_shape(x_t, eps, "ddim_inverse_step");
    const float a_t = s.alpha_bar(t);
    const float a_next = s.alpha_bar(t_next);
    if (a_next > a_t) {
        throw ScheduleError("ddim_inverse_step: t_next is less noisy than t");
    }
    if (a_next == a_t) {
        Latent out = x_t;
        out.step = t_next;
        return out;
    }
    const float ratio = std::sqrt(a_next / a_t);
    const float sig_t = std::sqrt(1.0f - a_t);
    const float sig_next = std::sqrt(1.0f - a_next);
    Latent out(x_t.channels, x_t.height, x_t.width);
    out.step = t_next;
    for (size_t i = 0; i < x_t.size(); ++i) {
        out.data[i] = ratio * (x_t.data[i] - sig_t * eps.data[i]) + sig_next * eps.data[i];
    }
    return out;
}

}  // namespace x0t
