#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "lysep/lysep.hpp"

namespace lysep::testkit {

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
    return m;
}

inline NetworkParams random_params(int M, int d_in, std::mt19937_64& rng, double scale = 1.0) {
    NetworkParams p(M, d_in);
    p.W1 = random_matrix(M, d_in, rng, scale);
    p.b1 = random_matrix(M, 1, rng, scale);
    p.W2 = random_matrix(M, M, rng, scale);
    p.b2 = random_matrix(M, 1, rng, scale);
    p.W3 = random_matrix(1, M, rng, scale);
    p.b3 = random_matrix(1, 1, rng, scale)(0, 0);
    return p;
}

/// Feasible aux plus independent noise on every block.
inline AuxState random_aux(const NetworkParams& p, const ActivationBundle& act, const Dataset& ds, ProblemKind kind,
                           std::mt19937_64& rng, double noise = 0.5) {
    AuxState a = feasible_aux(p, act, ds, kind);
    auto jitter = [&](Matrix& m) {
        if (m.size()) m += random_matrix(m.rows(), m.cols(), rng, noise);
    };
    jitter(a.a1);
    jitter(a.a2);
    for (auto& m : a.d1) jitter(m);
    for (auto& m : a.d2) jitter(m);
    for (auto& m : a.q) jitter(m);
    return a;
}

/// Small problems with non-constant coefficients for every kind at a chosen
/// dimension. Sources come from the same jet machinery as the benchmarks.
inline PdeProblem toy_problem(ProblemKind kind, int d) {
    auto c = [](const Vector& x) { return 1.5 + 0.5 * x(0) + 0.25 * x.squaredNorm(); };
    auto gc = [](const Vector& x) {
        Vector g = 0.5 * x;
        g(0) += 0.5;
        return g;
    };
    if (kind == ProblemKind::Elliptic)
        return detail::elliptic_problem("toy", d, c, gc, detail::sin_radial_cos_sum);
    auto tau = [](double t) { return detail::TimeJet{std::sin(t), std::cos(t), -std::sin(t)}; };
    return detail::separable_time_problem("toy", kind, d, 1.0, c, gc, tau, detail::sin_radial_cos_sum);
}

inline Dataset toy_dataset(const PdeProblem& prob, int n, std::uint64_t skip = 0) {
    const HaltonDraw h = is_time_dependent(prob.kind) ? halton_draw(prob.dim, n, skip, prob.horizon)
                                                      : halton_draw(prob.dim, n, skip);
    return make_dataset(prob, h.points);
}

inline const std::array<ProblemKind, 3> kAllKinds = {ProblemKind::Elliptic, ProblemKind::Parabolic,
                                                     ProblemKind::Hyperbolic};

/// Central difference of a scalar function of one entry.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// div(c grad u) by nested central differences with half-step coefficient samples.
inline double fd_div_c_grad(const std::function<double(const Vector&)>& u, const SpatialScalar& c, const Vector& x,
                     double h) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector e = Vector::Zero(x.size());
        e(i) = 1.0;
        const double up = (u(x + h * e) - u(x)) / h;
        const double dn = (u(x) - u(x - h * e)) / h;
        s += (c(x + 0.5 * h * e) * up - c(x - 0.5 * h * e) * dn) / h;
    }
    return s;
}

// Operator applied to u by central differences at step h.
inline double fd_operator_at(const PdeProblem& prob, const SpaceTimeScalar& u, double t, const Vector& x, double h) {
    const double spatial = fd_div_c_grad([&](const Vector& y) { return u(t, y); }, prob.coeff_c, x, h);
    switch (prob.kind) {
        case ProblemKind::Elliptic: return spatial;
        case ProblemKind::Parabolic: return (u(t + h, x) - u(t - h, x)) / (2.0 * h) - spatial;
        case ProblemKind::Hyperbolic: return (u(t + h, x) - 2.0 * u(t, x) + u(t - h, x)) / (h * h) - spatial;
    }
    return 0.0;
}

// Every stencil above is even in h, so one Richardson step removes the h^2
// term and leaves O(h^4).
inline double fd_operator(const PdeProblem& prob, const SpaceTimeScalar& u, double t, const Vector& x) {
    const double h = 2e-3;
    return (4.0 * fd_operator_at(prob, u, t, x, 0.5 * h) - fd_operator_at(prob, u, t, x, h)) / 3.0;
}

inline double fd_source(const PdeProblem& prob, double t, const Vector& x) {
    return fd_operator(prob, *prob.true_solution, t, x);
}

inline double max_source_error(const PdeProblem& prob, int count) {
    const bool timed = is_time_dependent(prob.kind);
    const Matrix pts = timed ? halton_timespace(prob.dim, prob.horizon, count, 7) : halton_ball(prob.dim, count, 7);
    double worst = 0.0;
    for (Eigen::Index n = 0; n < pts.cols(); ++n) {
        const double t = timed ? pts(0, n) : 0.0;
        const Vector x = timed ? Vector(pts.col(n).tail(prob.dim)) : Vector(pts.col(n));
        const double exact = prob.source(t, x);
        worst = std::max(worst, rel_err(exact, fd_source(prob, t, x), 1e-3));
    }
    return worst;
}

}  // namespace lysep::testkit
