#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lysep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using ScalarMap = std::function<double(double)>;

/// Lipschitz constants (C_*) and uniform bounds (B_*) of an activation and
/// its first two derivatives.
struct ActivationConstants {
    double lip = 0.0;        // C_sigma
    double lip_d1 = 0.0;     // C_sigma'
    double lip_d2 = 0.0;     // C_sigma''
    double bound = 0.0;      // B_sigma
    double bound_d1 = 0.0;   // B_sigma'
    double bound_d2 = 0.0;   // B_sigma''
};

/// An activation function with its derivatives up to third order.
///
/// The third derivative is not part of the consistency hypotheses; it is
/// needed only to differentiate the separated loss, whose residual carries
/// sigma'' terms. `smooth` is false for activations whose constants are not
/// meaningful (e.g. ReLU); the consistency checker refuses those.
struct ActivationBundle {
    std::string name;
    ScalarMap eval;
    ScalarMap d1;
    ScalarMap d2;
    ScalarMap d3;
    ActivationConstants constants;
    bool smooth = true;
};

/// Applies a scalar map element by element.
inline Matrix elementwise(const ScalarMap& f, const Matrix& z) { return z.unaryExpr(f); }

inline ActivationBundle make_sin_activation() {
    ActivationBundle b;
    b.name = "sin";
    b.eval = [](double z) { return std::sin(z); };
    b.d1 = [](double z) { return std::cos(z); };
    b.d2 = [](double z) { return -std::sin(z); };
    b.d3 = [](double z) { return -std::cos(z); };
    b.constants = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    return b;
}

inline ActivationBundle make_tanh_activation() {
    // sup|tanh''| = 4/(3 sqrt 3) at tanh^2 = 1/3; sup|tanh'''| = 2 at the origin.
    const double peak_d2 = 4.0 / (3.0 * std::sqrt(3.0));
    ActivationBundle b;
    b.name = "tanh";
    b.eval = [](double z) { return std::tanh(z); };
    b.d1 = [](double z) {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    };
    b.d2 = [](double z) {
        const double t = std::tanh(z);
        return -2.0 * t * (1.0 - t * t);
    };
    b.d3 = [](double z) {
        const double t = std::tanh(z);
        const double s = 1.0 - t * t;
        return 2.0 * s * (3.0 * t * t - 1.0);
    };
    b.constants = {1.0, peak_d2, 2.0, 1.0, 1.0, peak_d2};
    return b;
}

/// ReLU is usable by the baseline trainer only.
inline ActivationBundle make_relu_activation() {
    ActivationBundle b;
    b.name = "relu";
    b.eval = [](double z) { return z > 0.0 ? z : 0.0; };
    b.d1 = [](double z) { return z > 0.0 ? 1.0 : 0.0; };
    b.d2 = [](double) { return 0.0; };
    b.d3 = [](double) { return 0.0; };
    b.smooth = false;
    return b;
}

struct TheoremConstants {
    double c1 = 0.0;
    double c2 = 0.0;
    double c = 0.0;
};

/// C1, C2 and C of the consistency bound J <= factor * C * J_S.
inline TheoremConstants theorem_constants(const ActivationBundle& b) {
    if (!b.smooth)
        throw std::invalid_argument("activation '" + b.name +
                                    "' does not satisfy the Lipschitz hypotheses");
    const ActivationConstants& k = b.constants;
    for (double v : {k.lip, k.lip_d1, k.lip_d2, k.bound, k.bound_d1, k.bound_d2}) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("activation constants must be finite and positive");
    }
    TheoremConstants t;
    t.c1 = std::max(k.bound_d1 * std::max(1.0, k.bound_d1),
                    k.lip_d1 * std::max({1.0, k.bound_d1, k.lip}));
    t.c2 = std::max(k.bound_d2 * std::max({1.0, k.bound_d1, k.lip_d1, k.bound_d1 * k.bound_d1,
                                           k.bound_d1 * k.lip_d1}),
                    std::max(1.0, k.lip_d1) * std::max(k.lip_d1, k.bound_d1 * k.lip_d2));
    const double cs2 = k.lip * k.lip;
    t.c = std::max({1.0, 2.0 * cs2, 2.0 * cs2 * cs2, 5.0 * t.c1 * t.c1, 14.0 * t.c2 * t.c2});
    return t;
}

}  // namespace lysep
