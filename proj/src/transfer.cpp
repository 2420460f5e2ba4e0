#include "x0t/transfer.hpp"

#include "x0t/errors.hpp"

namespace x0t {

void TransferParams::validate(int num_sample_steps) const {
    if (!(delta >= 0.0f && delta <= 1.0f)) {
        throw DomainError("delta must be in [0, 1]");
    }
    if (!(lambda_ >= 0.0f && lambda_ <= 1.0f)) {
        throw DomainError("lambda must be in [0, 1]");
    }
    if (!(gamma >= 0.0f && gamma <= 1.0f)) {
        throw DomainError("gamma must be in [0, 1]");
    }
    if (!(mask_threshold > 0.0f && mask_threshold <= 1.0f)) {
        throw DomainError("mask_threshold must be in (0, 1]");
    }
    if (!(start_step >= 0 && start_step < end_step && end_step <= num_sample_steps)) {
        throw ConfigError("require 0 <= start_step < end_step <= num_sample_steps, got [" +
                          std::to_string(start_step) + ", " + std::to_string(end_step) +
                          ") with " + std::to_string(num_sample_steps) + " steps");
    }
}

Latent transfer_x0(const Latent& x0_src, const Latent& x0_tar_aligned, const ObjectMask& m,
                   float delta) {
    require_same_shape(x0_src, x0_tar_aligned, "transfer_x0");
    if (m.height != x0_src.height || m.width != x0_src.width) {
        throw ShapeError("transfer_x0: mask grid does not match latent grid");
    }
    if (!(delta >= 0.0f && delta <= 1.0f)) {
        throw DomainError("transfer_x0: delta must be in [0, 1]");
    }

    // Select, don't blend, outside the mask: background stays bit-identical.
    Latent out = x0_src;
    if (delta == 0.0f) {
        return out;
    }
    const float keep = 1.0f - delta;
    for (int y = 0; y < x0_src.height; ++y) {
        for (int x = 0; x < x0_src.width; ++x) {
            if (!m.at(y, x)) {
                continue;
            }
            for (int c = 0; c < x0_src.channels; ++c) {
                out.at(c, y, x) = keep * x0_src.at(c, y, x) + delta * x0_tar_aligned.at(c, y, x);
            }
        }
    }
    return out;
}

Latent transfer_delta(const Latent& x0_prime, const Latent& x0) {
    return sub(x0_prime, x0);
}

}  // namespace x0t
