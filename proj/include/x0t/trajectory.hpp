#pragma once

#include <optional>
#include <string>
#include <vector>

#include "x0t/backend.hpp"
#include "x0t/latent.hpp"
#include "x0t/schedule.hpp"

namespace x0t {

enum class TrajectoryKind { Source, Target };

// One inversion path, ordered as the sampler consumes it: entry 0 is the
// noisiest step, the last entry is the clean latent. `eps` is the noise
// prediction that produced the entry; `predicted_x0` is always
// predict_x0(latent, eps, timestep) of the stored pair.
struct TrajectoryEntry {
    int timestep = kNoStep;
    Latent latent;
    Latent eps;
    Latent predicted_x0;
    std::optional<TextEmbedding> uncond;
};

struct LatentTrajectory {
    TrajectoryKind kind = TrajectoryKind::Target;
    std::string prompt;
    float guidance_scale = 1.0f;
    std::vector<TrajectoryEntry> entries;
    // Replay residual of each transition entries[i] -> entries[i+1].
    std::vector<float> residuals;

    int num_steps() const { return static_cast<int>(entries.size()); }
    bool carries_uncond() const;

    // ContractError if the entries do not line up with the schedule.
    void require_matches(const Schedule& s) const;
};

}  // namespace x0t
