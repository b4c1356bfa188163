#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "lysep/activation.hpp"

namespace lysep {

/// Weights and biases of the three-layer network
///   phi(z) = W3 sigma(W2 sigma(W1 z + b1) + b2) + b3.
struct NetworkParams {
    Matrix W1;     // M x d_in
    Vector b1;     // M
    Matrix W2;     // M x M
    Vector b2;     // M
    RowVector W3;  // 1 x M
    double b3 = 0.0;

    NetworkParams() = default;
    NetworkParams(Eigen::Index width, Eigen::Index input_dim)
        : W1(Matrix::Zero(width, input_dim)),
          b1(Vector::Zero(width)),
          W2(Matrix::Zero(width, width)),
          b2(Vector::Zero(width)),
          W3(RowVector::Zero(width)) {}

    Eigen::Index width() const { return W1.rows(); }
    Eigen::Index input_dim() const { return W1.cols(); }

    /// Total number of scalar parameters.
    Eigen::Index size() const {
        return W1.size() + b1.size() + W2.size() + b2.size() + W3.size() + 1;
    }

    void validate() const {
        const Eigen::Index m = width();
        if (m < 1 || input_dim() < 1) throw std::invalid_argument("network: empty shape");
        if (b1.size() != m || W2.rows() != m || W2.cols() != m || b2.size() != m ||
            W3.size() != m)
            throw std::invalid_argument("network: inconsistent parameter shapes");
        if (!W1.allFinite() || !b1.allFinite() || !W2.allFinite() || !b2.allFinite() ||
            !W3.allFinite() || !std::isfinite(b3))
            throw std::invalid_argument("network: non-finite parameter");
    }
};

/// Pre-activations of both hidden layers and the network output on a batch.
struct ForwardTrace {
    Matrix z1;       // M x N
    Matrix z2;       // M x N
    RowVector out;   // 1 x N
};

inline ForwardTrace forward(const NetworkParams& p, const ActivationBundle& act, const Matrix& X) {
    if (X.cols() < 1) throw std::invalid_argument("forward: empty batch");
    if (X.rows() != p.input_dim())
        throw std::invalid_argument("forward: batch has " + std::to_string(X.rows()) +
                                    " rows, network expects " + std::to_string(p.input_dim()));
    ForwardTrace t;
    t.z1 = (p.W1 * X).colwise() + p.b1;
    t.z2 = (p.W2 * elementwise(act.eval, t.z1)).colwise() + p.b2;
    t.out = (p.W3 * elementwise(act.eval, t.z2)).array() + p.b3;
    return t;
}

namespace detail {

inline void check_coordinate(const NetworkParams& p, Eigen::Index i) {
    if (i < 0 || i >= p.input_dim())
        throw std::out_of_range("coordinate index " + std::to_string(i) + " out of range");
}

}  // namespace detail

/// d phi / d x_i, columnwise.
inline RowVector first_derivative(const NetworkParams& p, const ActivationBundle& act,
                                  const ForwardTrace& trace, Eigen::Index i) {
    detail::check_coordinate(p, i);
    // d_1i = W1(:,i) 1^T, d_2i = W2 (sigma'(z1) * d_1i)
    const Matrix d1 = elementwise(act.d1, trace.z1).array().colwise() * p.W1.col(i).array();
    const Matrix d2 = p.W2 * d1;
    return p.W3 * (elementwise(act.d1, trace.z2).array() * d2.array()).matrix();
}

/// d^2 phi / d x_i^2, columnwise:
///   W3 (sigma''(z2) * d_2i * d_2i + sigma'(z2) * q_i),  q_i = W2 (sigma''(z1) * d_1i * d_1i).
inline RowVector second_derivative(const NetworkParams& p, const ActivationBundle& act,
                                   const ForwardTrace& trace, Eigen::Index i) {
    detail::check_coordinate(p, i);
    const Eigen::ArrayXd w = p.W1.col(i).array();
    const Matrix d1 = elementwise(act.d1, trace.z1).array().colwise() * w;
    const Matrix d2 = p.W2 * d1;
    const Matrix q = p.W2 * (elementwise(act.d2, trace.z1).array().colwise() * (w * w)).matrix();
    const Matrix inner = elementwise(act.d2, trace.z2).array() * d2.array() * d2.array() +
                         elementwise(act.d1, trace.z2).array() * q.array();
    return p.W3 * inner;
}

}  // namespace lysep
