#include "x0t/backend.hpp"

#include "x0t/errors.hpp"

namespace x0t {

Latent Backend::predict_noise(const Latent& x, int t, const TextEmbedding& cond,
                              const TextEmbedding& uncond, float guidance_scale) {
    Latent uncond_pred = predict_noise_single(x, t, uncond);
    Latent cond_pred = predict_noise_single(x, t, cond);
    // uncond + s*(cond - uncond); bit-identical to uncond_pred when the two
    // raw predictions coincide.
    Latent out(x.channels, x.height, x.width);
    out.step = t;
    for (size_t i = 0; i < x.size(); ++i) {
        out.data[i] =
            uncond_pred.data[i] + guidance_scale * (cond_pred.data[i] - uncond_pred.data[i]);
    }
    return out;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
    if (config.kind == "mock") {
        return make_mock_backend(config.mock);
    }
    if (config.kind == "diffusion") {
        throw BackendError(
            "backend 'diffusion' requires an external latent-diffusion runtime; none is "
            "bundled with this build. Use --backend mock, or plug a model-backed Backend "
            "implementation into make_backend().");
    }
    throw ConfigError("unknown backend kind: " + config.kind);
}

}  // namespace x0t
