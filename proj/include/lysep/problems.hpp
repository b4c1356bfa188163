#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lysep/activation.hpp"

namespace lysep {

enum class ProblemKind { Elliptic, Parabolic, Hyperbolic };

inline const char* to_string(ProblemKind k) {
    switch (k) {
        case ProblemKind::Elliptic: return "elliptic";
        case ProblemKind::Parabolic: return "parabolic";
        case ProblemKind::Hyperbolic: return "hyperbolic";
    }
    return "?";
}

inline bool is_time_dependent(ProblemKind k) { return k != ProblemKind::Elliptic; }

using SpatialScalar = std::function<double(const Vector& x)>;
using SpatialVector = std::function<Vector(const Vector& x)>;
/// f(t, x); elliptic problems ignore t.
using SpaceTimeScalar = std::function<double(double t, const Vector& x)>;

/// A linear second-order problem on the unit ball (times [0, T] when time
/// dependent) with homogeneous boundary and initial data:
///   elliptic    div(c grad u) = f
///   parabolic   u_t  = div(c grad u) + Q
///   hyperbolic  u_tt = div(c grad u) + Q,  u_t(0, .) = 0
struct PdeProblem {
    std::string name;
    ProblemKind kind = ProblemKind::Elliptic;
    int dim = 1;
    double horizon = 1.0;
    SpatialScalar coeff_c;
    SpatialVector grad_c;
    SpaceTimeScalar source;
    std::optional<SpaceTimeScalar> true_solution;

    int input_dim() const { return is_time_dependent(kind) ? dim + 1 : dim; }
};

/// Training or testing batch. For time-dependent kinds row 0 of X is t and
/// rows 1..d the spatial point.
struct Dataset {
    Matrix X;
    RowVector Y;
    RowVector X_hat;   // |x|^2
    RowVector T0;      // t (time-dependent kinds)
    RowVector T0_hat;  // t^2

    Eigen::Index size() const { return X.cols(); }
};

inline auto spatial_block(const Dataset& ds, ProblemKind kind) {
    const Eigen::Index off = is_time_dependent(kind) ? 1 : 0;
    return ds.X.middleRows(off, ds.X.rows() - off);
}

inline Dataset make_dataset(const PdeProblem& prob, const Matrix& points,
                            std::optional<RowVector> values = std::nullopt) {
    if (points.cols() < 1) throw std::invalid_argument("dataset: no points");
    if (points.rows() != prob.input_dim())
        throw std::invalid_argument("dataset: point dimension does not match problem");
    Dataset ds;
    ds.X = points;
    const bool timed = is_time_dependent(prob.kind);
    const auto xs = spatial_block(ds, prob.kind);
    ds.X_hat = xs.colwise().squaredNorm();
    if (timed) {
        ds.T0 = ds.X.row(0);
        ds.T0_hat = ds.T0.array().square();
    }
    for (Eigen::Index n = 0; n < ds.size(); ++n) {
        if (ds.X_hat(n) > 1.0 + 1e-12) throw std::invalid_argument("dataset: point outside unit ball");
        if (timed && (ds.T0(n) < 0.0 || ds.T0(n) > prob.horizon))
            throw std::invalid_argument("dataset: time outside [0, T]");
        if (!(prob.coeff_c(xs.col(n)) > 0.0))
            throw std::invalid_argument("dataset: coefficient c is not positive at a sampled point");
    }
    if (values) {
        if (values->size() != ds.size()) throw std::invalid_argument("dataset: value count mismatch");
        ds.Y = *values;
    } else {
        ds.Y.resize(ds.size());
        for (Eigen::Index n = 0; n < ds.size(); ++n)
            ds.Y(n) = prob.source(timed ? ds.T0(n) : 0.0, xs.col(n));
    }
    return ds;
}

/// psi = (|x|^2 - 1) phi, t (|x|^2 - 1) phi or t^2 (|x|^2 - 1) phi.
inline RowVector ansatz_value(const PdeProblem& prob, const RowVector& phi, const Dataset& ds) {
    if (phi.size() != ds.size()) throw std::invalid_argument("ansatz: batch size mismatch");
    if (ds.X.rows() != prob.input_dim()) throw std::invalid_argument("ansatz: kind/batch mismatch");
    RowVector v = (ds.X_hat.array() - 1.0) * phi.array();
    switch (prob.kind) {
        case ProblemKind::Elliptic: break;
        case ProblemKind::Parabolic: v.array() *= ds.T0.array(); break;
        case ProblemKind::Hyperbolic: v.array() *= ds.T0_hat.array(); break;
    }
    return v;
}

/// One derivative direction of the network input that the residual couples:
/// the residual contains first[j] * d_j phi and, if present, second[j] * d_jj phi.
/// Signs of the parabolic/hyperbolic operator are folded into the rows.
struct DerivativeSlot {
    Eigen::Index column = 0;  // column of W1 / row of X
    std::string label;
    RowVector first;
    std::optional<RowVector> second;
    double first_inf = 0.0;
    double second_inf = 0.0;

    bool has_second() const { return second.has_value(); }
};

struct CoeffNorms {
    double K = 0.0;
    std::vector<double> K_i;
    double K_hat = 0.0;
    double K_0 = 0.0;
    double K_hat_0 = 0.0;
    std::vector<double> K_hat_i;
};

/// Batch-evaluated rows multiplying phi and its derivatives in the expanded
/// residual. K_hat is empty for the hyperbolic kind (which uses K_hat_0 and
/// K_hat_i instead).
struct CoeffBundle {
    ProblemKind kind = ProblemKind::Elliptic;
    RowVector K;
    std::vector<RowVector> K_i;
    RowVector K_hat;
    std::optional<RowVector> K_0;
    std::optional<RowVector> K_hat_0;
    std::vector<RowVector> K_hat_i;
    CoeffNorms inf_norms;
    std::vector<DerivativeSlot> slots;

    Eigen::Index size() const { return K.size(); }
};

inline double inf_norm(const RowVector& r) { return r.size() ? r.cwiseAbs().maxCoeff() : 0.0; }

inline CoeffBundle coeff_bundle(const PdeProblem& prob, const Dataset& ds) {
    if (ds.size() < 1) throw std::invalid_argument("coeff_bundle: empty batch");
    if (!prob.coeff_c || !prob.grad_c) throw std::invalid_argument("coeff_bundle: missing c or grad c");
    const int d = prob.dim;
    const Eigen::Index n_pts = ds.size();
    const auto xs = spatial_block(ds, prob.kind);
    if (xs.rows() != d) throw std::invalid_argument("coeff_bundle: batch dimension mismatch");

    RowVector c(n_pts);
    Matrix gc(d, n_pts);
    for (Eigen::Index n = 0; n < n_pts; ++n) {
        const Vector x = xs.col(n);
        c(n) = prob.coeff_c(x);
        const Vector g = prob.grad_c(x);
        if (g.size() != d) throw std::invalid_argument("coeff_bundle: grad c has wrong dimension");
        gc.col(n) = g;
    }
    const Eigen::ArrayXXd x = xs.array();
    const Eigen::Array<double, 1, Eigen::Dynamic> xm1 = ds.X_hat.array() - 1.0;
    const Eigen::Array<double, 1, Eigen::Dynamic> x_dot_gc = (x * gc.array()).colwise().sum();

    CoeffBundle b;
    b.kind = prob.kind;
    b.K_i.resize(d);
    switch (prob.kind) {
        case ProblemKind::Elliptic: {
            b.K = 2.0 * (d * c.array() + x_dot_gc);
            for (int i = 0; i < d; ++i)
                b.K_i[i] = 4.0 * x.row(i) * c.array() + gc.array().row(i) * xm1;
            b.K_hat = c.array() * xm1;
            break;
        }
        case ProblemKind::Parabolic: {
            const auto t = ds.T0.array();
            b.K = xm1 - 2.0 * d * c.array() * t - 2.0 * t * x_dot_gc;
            b.K_0 = RowVector(t * xm1);
            for (int i = 0; i < d; ++i)
                b.K_i[i] = t * (xm1 * gc.array().row(i) + 4.0 * x.row(i) * c.array());
            b.K_hat = c.array() * t * xm1;
            break;
        }
        case ProblemKind::Hyperbolic: {
            const auto t = ds.T0.array();
            const auto t2 = ds.T0_hat.array();
            b.K = 2.0 * (xm1 - d * t2 * c.array() - t2 * x_dot_gc);
            b.K_0 = RowVector(4.0 * t * xm1);
            b.K_hat_0 = RowVector(t2 * xm1);
            b.K_hat_i.resize(d);
            for (int i = 0; i < d; ++i) {
                b.K_i[i] = b.K_hat_0->array() * gc.array().row(i) + 4.0 * t2 * x.row(i) * c.array();
                b.K_hat_i[i] = c.array() * b.K_hat_0->array();
            }
            break;
        }
    }

    CoeffNorms& nr = b.inf_norms;
    nr.K = inf_norm(b.K);
    nr.K_hat = inf_norm(b.K_hat);
    for (const auto& r : b.K_i) nr.K_i.push_back(inf_norm(r));
    if (b.K_0) nr.K_0 = inf_norm(*b.K_0);
    if (b.K_hat_0) nr.K_hat_0 = inf_norm(*b.K_hat_0);
    for (const auto& r : b.K_hat_i) nr.K_hat_i.push_back(inf_norm(r));

    auto add_slot = [&](Eigen::Index col, std::string label, RowVector first,
                        std::optional<RowVector> second) {
        DerivativeSlot s;
        s.column = col;
        s.label = std::move(label);
        s.first_inf = inf_norm(first);
        s.first = std::move(first);
        if (second) {
            s.second_inf = inf_norm(*second);
            s.second = std::move(second);
        }
        b.slots.push_back(std::move(s));
    };
    const auto xlabel = [](int i) { return "x" + std::to_string(i + 1); };
    switch (prob.kind) {
        case ProblemKind::Elliptic:
            for (int i = 0; i < d; ++i) add_slot(i, xlabel(i), b.K_i[i], b.K_hat);
            break;
        case ProblemKind::Parabolic:
            add_slot(0, "t", *b.K_0, std::nullopt);
            for (int i = 0; i < d; ++i)
                add_slot(i + 1, xlabel(i), -b.K_i[i], RowVector(-b.K_hat));
            break;
        case ProblemKind::Hyperbolic:
            add_slot(0, "t", *b.K_0, *b.K_hat_0);
            for (int i = 0; i < d; ++i)
                add_slot(i + 1, xlabel(i), -b.K_i[i], RowVector(-b.K_hat_i[i]));
            break;
    }
    return b;
}

namespace detail {

/// Value, gradient and Hessian diagonal of a spatial function.
struct Jet {
    double value = 0.0;
    Vector grad;
    Vector hess_diag;
};

/// Value and first two time derivatives of a scalar function of t.
struct TimeJet {
    double value = 0.0;
    double dt = 0.0;
    double dtt = 0.0;
};

// sin(g(x)) * C(x) with g = (|x|^2 - 1)/d and C = sum_i cos(x_i / sqrt d).
inline Jet sin_radial_cos_sum(const Vector& x) {
    const double d = static_cast<double>(x.size());
    const double rd = std::sqrt(d);
    const double g = (x.squaredNorm() - 1.0) / d;
    const double sg = std::sin(g), cg = std::cos(g);
    double csum = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) csum += std::cos(x(i) / rd);
    Jet j;
    j.value = sg * csum;
    j.grad.resize(x.size());
    j.hess_diag.resize(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double gi = 2.0 * x(i) / d;           // dg/dx_i
        const double ci = -std::sin(x(i) / rd) / rd;  // dC/dx_i
        const double cii = -std::cos(x(i) / rd) / d;  // d2C/dx_i2
        j.grad(i) = cg * gi * csum + sg * ci;
        j.hess_diag(i) = (-sg * gi * gi + cg * 2.0 / d) * csum + 2.0 * cg * gi * ci + sg * cii;
    }
    return j;
}

inline PdeProblem elliptic_problem(std::string name, int d, SpatialScalar c, SpatialVector gc,
                                   std::function<Jet(const Vector&)> u) {
    PdeProblem p;
    p.name = std::move(name);
    p.kind = ProblemKind::Elliptic;
    p.dim = d;
    p.coeff_c = std::move(c);
    p.grad_c = std::move(gc);
    p.true_solution = [u](double, const Vector& x) { return u(x).value; };
    const SpatialScalar cc = p.coeff_c;
    const SpatialVector gg = p.grad_c;
    p.source = [u, cc, gg](double, const Vector& x) {
        const Jet j = u(x);
        return cc(x) * j.hess_diag.sum() + gg(x).dot(j.grad);
    };
    return p;
}

/// u(t, x) = tau(t) F(x); source = d^k u / dt^k - div(c grad u) with k = 1 or 2.
inline PdeProblem separable_time_problem(std::string name, ProblemKind kind, int d, double T,
                                         SpatialScalar c, SpatialVector gc,
                                         std::function<TimeJet(double)> tau,
                                         std::function<Jet(const Vector&)> F) {
    PdeProblem p;
    p.name = std::move(name);
    p.kind = kind;
    p.dim = d;
    p.horizon = T;
    p.coeff_c = c;
    p.grad_c = gc;
    p.true_solution = [tau, F](double t, const Vector& x) { return tau(t).value * F(x).value; };
    const bool second_order = kind == ProblemKind::Hyperbolic;
    p.source = [tau, F, c, gc, second_order](double t, const Vector& x) {
        const TimeJet tj = tau(t);
        const Jet fj = F(x);
        const double spatial = c(x) * fj.hess_diag.sum() + gc(x).dot(fj.grad);
        const double time_term = second_order ? tj.dtt : tj.dt;
        return time_term * fj.value - tj.value * spatial;
    };
    return p;
}

}  // namespace detail

/// Benchmark problems with closed-form solutions. Sources are obtained by
/// applying the operator to hand-differentiated solution jets.
inline PdeProblem manufactured_problem(const std::string& name) {
    using detail::Jet;
    using detail::TimeJet;
    if (name == "elliptic2d") {
        // u = (exp(|x|^2 - 1) - 1)(sin x1 + sin x2), c = |x|^2
        auto u = [](const Vector& x) {
            const double e = std::exp(x.squaredNorm() - 1.0);
            const double a = e - 1.0;
            const double s = std::sin(x(0)) + std::sin(x(1));
            Jet j;
            j.value = a * s;
            j.grad.resize(2);
            j.hess_diag.resize(2);
            for (int i = 0; i < 2; ++i) {
                const double ai = 2.0 * x(i) * e;
                const double aii = 2.0 * e + 4.0 * x(i) * x(i) * e;
                j.grad(i) = ai * s + a * std::cos(x(i));
                j.hess_diag(i) = aii * s + 2.0 * ai * std::cos(x(i)) - a * std::sin(x(i));
            }
            return j;
        };
        return detail::elliptic_problem(
            name, 2, [](const Vector& x) { return x.squaredNorm(); },
            [](const Vector& x) { return Vector(2.0 * x); }, u);
    }
    if (name == "elliptic10d") {
        // u = sin((|x|^2 - 1)/d), c = |x|^2 / d
        static constexpr int d = 10;
        auto u = [](const Vector& x) {
            const double g = (x.squaredNorm() - 1.0) / d;
            Jet j;
            j.value = std::sin(g);
            j.grad = std::cos(g) * 2.0 * x / d;
            j.hess_diag = (-std::sin(g) * (2.0 * x.array() / d).square() + std::cos(g) * 2.0 / d).matrix();
            return j;
        };
        return detail::elliptic_problem(
            name, d, [](const Vector& x) { return x.squaredNorm() / d; },
            [](const Vector& x) { return Vector(2.0 * x / d); }, u);
    }
    if (name == "parabolic5d" || name == "hyperbolic5d") {
        static constexpr int d = 5;
        // c = (1/d) sum_i x_i + 2
        auto c = [](const Vector& x) { return x.sum() / d + 2.0; };
        auto gc = [](const Vector& x) { return Vector(Vector::Constant(x.size(), 1.0 / d)); };
        if (name == "parabolic5d") {
            // tau = exp(-t/d) - 1
            auto tau = [](double t) {
                const double e = std::exp(-t / d);
                return TimeJet{e - 1.0, -e / d, e / (d * d)};
            };
            return detail::separable_time_problem(name, ProblemKind::Parabolic, d, 1.0, c, gc, tau,
                                                  detail::sin_radial_cos_sum);
        }
        // tau = exp(-t^2/d) - 1
        auto tau = [](double t) {
            const double e = std::exp(-t * t / d);
            const double s = 2.0 * t / d;
            return TimeJet{e - 1.0, -s * e, e * (s * s - 2.0 / d)};
        };
        return detail::separable_time_problem(name, ProblemKind::Hyperbolic, d, 1.0, c, gc, tau,
                                              detail::sin_radial_cos_sum);
    }
    throw std::invalid_argument("unknown problem '" + name + "'");
}

}  // namespace lysep
