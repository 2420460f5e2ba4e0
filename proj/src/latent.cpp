#include "x0t/latent.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "x0t/errors.hpp"

namespace x0t {

std::string Latent::shape_str() const {
    std::ostringstream os;
    os << channels << "x" << height << "x" << width;
    return os.str();
}

void require_same_shape(const Latent& a, const Latent& b, const char* who) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
}

Latent lincomb(float wa, const Latent& a, float wb, const Latent& b) {
    require_same_shape(a, b, "lincomb");
    Latent out(a.channels, a.height, a.width);
    out.step = a.step;
    for (size_t i = 0; i < a.size(); ++i) {
        out.data[i] = wa * a.data[i] + wb * b.data[i];
    }
    return out;
}

Latent add(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "add");
    Latent out(a.channels, a.height, a.width);
    out.step = a.step;
    for (size_t i = 0; i < a.size(); ++i) {
        out.data[i] = a.data[i] + b.data[i];
    }
    return out;
}

Latent sub(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "sub");
    Latent out(a.channels, a.height, a.width);
    out.step = a.step;
    for (size_t i = 0; i < a.size(); ++i) {
        out.data[i] = a.data[i] - b.data[i];
    }
    return out;
}

Latent scale(const Latent& a, float s) {
    Latent out(a.channels, a.height, a.width);
    out.step = a.step;
    for (size_t i = 0; i < a.size(); ++i) {
        out.data[i] = s * a.data[i];
    }
    return out;
}

Latent blend_toward(const Latent& a, const Latent& b, float w) {
    require_same_shape(a, b, "blend_toward");
    if (w == 1.0f) {
        return a;
    }
    Latent out(a.channels, a.height, a.width);
    out.step = b.step;
    for (size_t i = 0; i < a.size(); ++i) {
        out.data[i] = b.data[i] + w * (a.data[i] - b.data[i]);
    }
    return out;
}

float max_abs(const Latent& a) {
    float m = 0.0f;
    for (float v : a.data) {
        m = std::max(m, std::fabs(v));
    }
    return m;
}

float max_abs_diff(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "max_abs_diff");
    float m = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    }
    return m;
}

bool all_finite(const Latent& a) {
    for (float v : a.data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

}  // namespace x0t
