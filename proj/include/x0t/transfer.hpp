#pragma once

#include <string>

#include "x0t/latent.hpp"
#include "x0t/masking.hpp"
#include "x0t/matching.hpp"

namespace x0t {

// The full knob set of the transfer stage.
struct TransferParams {
    float delta = 0.6f;
    float lambda_ = 0.2f;
    float gamma = 0.2f;
    int start_step = 12;
    int end_step = 21;
    MatchingMode matching_mode = MatchingMode::Progressive;
    float mask_threshold = 0.5f;

    // Throws DomainError/ConfigError when a field is outside its range.
    void validate(int num_sample_steps) const;
};

// Mask-wise blend in x0 space:
//   x'_0 = M*((1-delta)*x0_src + delta*x0_tar_aligned) + (1-M)*x0_src
// Outside the mask the output is bit-identical to x0_src.
Latent transfer_x0(const Latent& x0_src, const Latent& x0_tar_aligned, const ObjectMask& m,
                   float delta);

// Residual form: x0 + transfer_delta(x'_0, x0) == x'_0 bit-exactly.
Latent transfer_delta(const Latent& x0_prime, const Latent& x0);

}  // namespace x0t
