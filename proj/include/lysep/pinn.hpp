#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lysep/network.hpp"
#include "lysep/problems.hpp"

namespace lysep {

/// Operator applied to the ansatz, expanded as
///   K * phi + sum_j first_j * d_j phi + sum_j second_j * d_jj phi.
inline RowVector pinn_residual(const CoeffBundle& bundle, const NetworkParams& p,
                               const ActivationBundle& act, const Dataset& ds) {
    if (bundle.size() != ds.size()) throw std::invalid_argument("pinn_residual: bundle/batch mismatch");
    const ForwardTrace tr = forward(p, act, ds.X);
    RowVector r = bundle.K.array() * tr.out.array();
    for (const DerivativeSlot& s : bundle.slots) {
        r.array() += s.first.array() * first_derivative(p, act, tr, s.column).array();
        if (s.second) r.array() += s.second->array() * second_derivative(p, act, tr, s.column).array();
    }
    return r;
}

inline RowVector pinn_residual(const PdeProblem& prob, const NetworkParams& p,
                               const ActivationBundle& act, const Dataset& ds) {
    return pinn_residual(coeff_bundle(prob, ds), p, act, ds);
}

/// (1/N) |residual - Y|^2.
inline double pinn_loss(const CoeffBundle& bundle, const NetworkParams& p, const ActivationBundle& act,
                        const Dataset& ds) {
    return (pinn_residual(bundle, p, act, ds) - ds.Y).squaredNorm() / static_cast<double>(ds.size());
}

inline double pinn_loss(const PdeProblem& prob, const NetworkParams& p, const ActivationBundle& act,
                        const Dataset& ds) {
    return pinn_loss(coeff_bundle(prob, ds), p, act, ds);
}

/// Loss value and its gradient with respect to every network parameter.
struct PinnGradient {
    double loss = 0.0;
    NetworkParams grad;
};

/// Reverse-mode pass through phi and its first/second input derivatives.
inline PinnGradient pinn_loss_gradient(const CoeffBundle& bundle, const NetworkParams& p,
                                       const ActivationBundle& act, const Dataset& ds) {
    const Eigen::Index n = ds.size();
    const Eigen::Index m = p.width();
    const Matrix z1 = (p.W1 * ds.X).colwise() + p.b1;
    const Matrix s1 = elementwise(act.eval, z1), ds1 = elementwise(act.d1, z1), dds1 = elementwise(act.d2, z1),
                 ddds1 = elementwise(act.d3, z1);
    const Matrix z2 = (p.W2 * s1).colwise() + p.b2;
    const Matrix s2 = elementwise(act.eval, z2), ds2 = elementwise(act.d1, z2), dds2 = elementwise(act.d2, z2),
                 ddds2 = elementwise(act.d3, z2);

    const std::size_t ns = bundle.slots.size();
    std::vector<Matrix> e1(ns), e2(ns), f1(ns), f2(ns);
    RowVector r = bundle.K.array() * ((p.W3 * s2).array() + p.b3);
    for (std::size_t j = 0; j < ns; ++j) {
        const DerivativeSlot& s = bundle.slots[j];
        const Eigen::ArrayXd w = p.W1.col(s.column).array();
        e1[j] = ds1.array().colwise() * w;
        e2[j] = p.W2 * e1[j];
        r.array() += s.first.array() * (p.W3 * ds2.cwiseProduct(e2[j])).array();
        if (s.second) {
            f1[j] = dds1.array().colwise() * (w * w);
            f2[j] = p.W2 * f1[j];
            const Matrix inner = dds2.array() * e2[j].array().square() + ds2.array() * f2[j].array();
            r.array() += s.second->array() * (p.W3 * inner).array();
        }
    }
    r -= ds.Y;

    PinnGradient out;
    out.loss = r.squaredNorm() / static_cast<double>(n);
    out.grad = NetworkParams(m, p.input_dim());
    NetworkParams& g = out.grad;

    const RowVector delta = (2.0 / static_cast<double>(n)) * r;
    const RowVector u0 = delta.cwiseProduct(bundle.K);
    const Eigen::ArrayXd w3 = p.W3.transpose().array();

    // Adjoints with respect to z2, written before the W3 factor.
    Matrix gz2 = ds2.array().rowwise() * u0.array();
    g.W3 = u0 * s2.transpose();
    g.b3 = u0.sum();
    Matrix gs1;
    Matrix gz1 = Matrix::Zero(m, n);
    std::vector<Matrix> ge1(ns), gf1(ns);
    for (std::size_t j = 0; j < ns; ++j) {
        const DerivativeSlot& s = bundle.slots[j];
        const RowVector uj = delta.cwiseProduct(s.first);
        g.W3 += uj * ds2.cwiseProduct(e2[j]).transpose();
        gz2.array() += dds2.array() * e2[j].array() * uj.replicate(m, 1).array();
        Matrix ge2 = ds2.array().rowwise() * uj.array();
        if (s.second) {
            const RowVector vj = delta.cwiseProduct(*s.second);
            const Matrix inner = dds2.array() * e2[j].array().square() + ds2.array() * f2[j].array();
            g.W3 += vj * inner.transpose();
            gz2.array() += (ddds2.array() * e2[j].array().square() + dds2.array() * f2[j].array())
                               .rowwise() * vj.array();
            ge2.array() += 2.0 * ((dds2.array() * e2[j].array()).rowwise() * vj.array());
            const Matrix gf2 = (ds2.array().rowwise() * vj.array()).colwise() * w3;
            g.W2 += gf2 * f1[j].transpose();
            gf1[j] = p.W2.transpose() * gf2;
        }
        ge2.array().colwise() *= w3;
        g.W2 += ge2 * e1[j].transpose();
        ge1[j] = p.W2.transpose() * ge2;
    }
    gz2.array().colwise() *= w3;
    g.W2 += gz2 * s1.transpose();
    g.b2 = gz2.rowwise().sum();
    gs1 = p.W2.transpose() * gz2;
    gz1 = gs1.cwiseProduct(ds1);
    for (std::size_t j = 0; j < ns; ++j) {
        const DerivativeSlot& s = bundle.slots[j];
        const Eigen::ArrayXd w = p.W1.col(s.column).array();
        gz1.array() += (ge1[j].array() * dds1.array()).colwise() * w;
        Vector gw = (ge1[j].array() * ds1.array()).rowwise().sum();
        if (s.second) {
            gz1.array() += (gf1[j].array() * ddds1.array()).colwise() * (w * w);
            gw.array() += 2.0 * w * (gf1[j].array() * dds1.array()).rowwise().sum();
        }
        g.W1.col(s.column) += gw;
    }
    g.W1 += gz1 * ds.X.transpose();
    g.b1 = gz1.rowwise().sum();
    return out;
}

/// lr_k = lr0 * decay^k.
struct LearningRateSchedule {
    double lr0 = 1e-3;
    double decay = 0.9995;

    double at(int k) const { return lr0 * std::pow(decay, k); }
};

struct PinnTrainResult {
    NetworkParams params;
    std::vector<double> losses;  // J before each update, then the final J
    bool diverged = false;
    int failed_iteration = -1;
    std::string message;
};

/// Called after iteration k (k = 0 is the initial state) with the current
/// parameters and loss.
using PinnObserver = std::function<void(int k, const NetworkParams&, double loss)>;

inline constexpr double kDivergenceThreshold = 1e12;

/// Full-batch gradient descent on the PINN loss.
inline PinnTrainResult train_pinn_gd(const PdeProblem& prob, const NetworkParams& p0,
                                     const ActivationBundle& act, const Dataset& ds, int iters,
                                     const LearningRateSchedule& schedule,
                                     const PinnObserver& observer = {}) {
    if (iters < 1) throw std::invalid_argument("train_pinn_gd: iters must be >= 1");
    const CoeffBundle bundle = coeff_bundle(prob, ds);
    PinnTrainResult res;
    res.params = p0;
    for (int k = 0; k <= iters; ++k) {
        PinnGradient g = pinn_loss_gradient(bundle, res.params, act, ds);
        if (!std::isfinite(g.loss) || g.loss > kDivergenceThreshold) {
            res.diverged = true;
            res.failed_iteration = k;
            res.message = "loss became non-finite or exceeded 1e12 at iteration " + std::to_string(k);
            res.losses.push_back(g.loss);
            if (observer) observer(k, res.params, g.loss);
            return res;
        }
        res.losses.push_back(g.loss);
        if (observer) observer(k, res.params, g.loss);
        if (k == iters) break;
        const double lr = schedule.at(k);
        NetworkParams& p = res.params;
        p.W1 -= lr * g.grad.W1;
        p.b1 -= lr * g.grad.b1;
        p.W2 -= lr * g.grad.W2;
        p.b2 -= lr * g.grad.b2;
        p.W3 -= lr * g.grad.W3;
        p.b3 -= lr * g.grad.b3;
    }
    return res;
}

}  // namespace lysep
