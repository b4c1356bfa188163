#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lysep/activation.hpp"
#include "lysep/network.hpp"
#include "lysep/problems.hpp"

namespace lysep {

/// Which W1 column each derivative slot differentiates and whether the slot
/// carries a second-derivative variable q. Elliptic: one slot per coordinate,
/// all with q. Parabolic: slot 0 is time without q. Hyperbolic: time with q.
struct SlotShape {
    Eigen::Index column = 0;
    bool has_q = true;
};

inline std::vector<SlotShape> aux_layout(ProblemKind kind, Eigen::Index input_dim) {
    std::vector<SlotShape> out;
    for (Eigen::Index c = 0; c < input_dim; ++c)
        out.push_back({c, !(kind == ProblemKind::Parabolic && c == 0)});
    return out;
}

/// Auxiliary variables standing in for the layer pre-activations (a1, a2),
/// their first input derivatives (d1[j], d2[j]) and second-derivative
/// combinations (q[j]). q[j] is an empty matrix for slots without q.
struct AuxState {
    Matrix a1, a2;
    std::vector<Matrix> d1, d2, q;

    std::size_t slots() const { return d1.size(); }
    bool has_q(std::size_t j) const { return q[j].size() > 0; }
};

/// Sum_n diag(n)^2 |A(:, n)|^2.
inline double weighted_norm_sq(const Matrix& A, const RowVector& diag) {
    if (A.cols() != diag.size()) throw std::invalid_argument("weighted_norm_sq: length mismatch");
    return (diag.array().square() * A.colwise().squaredNorm().array()).sum();
}

/// Auxiliary variables satisfying every constraint exactly for the given
/// parameters; all penalty terms then vanish.
inline AuxState feasible_aux(const NetworkParams& p, const ActivationBundle& act, const Matrix& X,
                             ProblemKind kind) {
    const auto layout = aux_layout(kind, p.input_dim());
    AuxState a;
    a.a1 = (p.W1 * X).colwise() + p.b1;
    const Matrix ds1 = elementwise(act.d1, a.a1);
    const Matrix dds1 = elementwise(act.d2, a.a1);
    a.a2 = (p.W2 * elementwise(act.eval, a.a1)).colwise() + p.b2;
    for (const SlotShape& s : layout) {
        const Eigen::ArrayXd w = p.W1.col(s.column).array();
        a.d1.push_back(p.W1.col(s.column).replicate(1, X.cols()));
        a.d2.push_back(p.W2 * (ds1.array().colwise() * w).matrix());
        a.q.push_back(s.has_q ? Matrix(p.W2 * (dds1.array().colwise() * (w * w)).matrix()) : Matrix());
    }
    return a;
}

inline AuxState feasible_aux(const NetworkParams& p, const ActivationBundle& act, const Dataset& ds,
                             ProblemKind kind) {
    return feasible_aux(p, act, ds.X, kind);
}

/// Per-slot penalty weights and diagonals. Identity diagonals are not stored.
struct SlotPenalty {
    std::string label;
    bool has_q = false;
    double omega_a1_2 = 0.0, omega_a1_3 = 0.0, omega_a2_2 = 0.0;
    double omega_d1_1 = 0.0, omega_d1_2 = 0.0, omega_d2_1 = 0.0, omega_d2_2 = 0.0, omega_q = 0.0;
    RowVector diag_a1_2, diag_a1_3, diag_a2_2, diag_d1_2, diag_d2_1;
};

/// Self-adaptive weights omega and diagonal matrices D of the separated loss.
struct PenaltyAssembly {
    double omega_a1_1 = 0.0;
    double omega_a2_1 = 0.0;
    RowVector diag_a1_1, diag_a2_1;
    std::vector<SlotPenalty> slots;
};

using PenaltyTerms = std::vector<std::pair<std::string, double>>;

struct LossBreakdown {
    double total = 0.0;
    double residual_term = 0.0;
    PenaltyTerms penalty_terms;
};

enum class GradientConvention {
    Full,    // omega and D differentiated along with the variable
    Frozen,  // omega and D treated as constants
};

enum class Block { W1Column, A1, D1, W2, A2, D2, Q };

inline const char* to_string(Block b) {
    switch (b) {
        case Block::W1Column: return "W1";
        case Block::A1: return "a1";
        case Block::D1: return "d1";
        case Block::W2: return "W2";
        case Block::A2: return "a2";
        case Block::D2: return "d2";
        case Block::Q: return "q";
    }
    return "?";
}

/// Separated loss on a fixed batch with the current iterate (params, aux).
///
/// Products with W2 over the batch are cached; any mutation must go through
/// the setters so the caches stay valid.
class SeparatedObjective {
public:
    SeparatedObjective(ActivationBundle act, CoeffBundle bundle, Dataset ds, NetworkParams params,
                       AuxState aux)
        : act_(std::move(act)), bundle_(std::move(bundle)), ds_(std::move(ds)),
          params_(std::move(params)), aux_(std::move(aux)) {
        check_shapes();
        invalidate_all();
    }

    const NetworkParams& params() const { return params_; }
    const AuxState& aux() const { return aux_; }
    const CoeffBundle& bundle() const { return bundle_; }
    const Dataset& dataset() const { return ds_; }
    const ActivationBundle& activation() const { return act_; }
    std::size_t slot_count() const { return bundle_.slots.size(); }
    Eigen::Index batch_size() const { return ds_.size(); }

    void set_params(NetworkParams p) {
        params_ = std::move(p);
        check_shapes();
        invalidate_all();
    }
    void set_aux(AuxState a) {
        aux_ = std::move(a);
        check_shapes();
        invalidate_all();
    }
    void set_b1(Vector b) {
        params_.b1 = std::move(b);
        core_valid_ = r1_valid_ = false;
    }
    void set_b2(Vector b) {
        params_.b2 = std::move(b);
        core_valid_ = r2_valid_ = false;
    }
    void set_W3(RowVector w) {
        params_.W3 = std::move(w);
        core_valid_ = false;
    }
    void set_b3(double b) {
        params_.b3 = b;
        core_valid_ = false;
    }

    /// Current value of a gradient-updated variable.
    Matrix value(Block b, std::size_t slot = 0) const {
        switch (b) {
            case Block::W1Column: return params_.W1.col(bundle_.slots.at(slot).column);
            case Block::A1: return aux_.a1;
            case Block::D1: return aux_.d1.at(slot);
            case Block::W2: return params_.W2;
            case Block::A2: return aux_.a2;
            case Block::D2: return aux_.d2.at(slot);
            case Block::Q: return aux_.q.at(slot);
        }
        return {};
    }

    /// Overwrites a gradient-updated variable and refreshes dependent caches.
    void set_value(Block b, std::size_t slot, const Matrix& v) {
        core_valid_ = false;
        switch (b) {
            case Block::W1Column:
                params_.W1.col(bundle_.slots.at(slot).column) = v;
                r1_valid_ = false;
                slot_e_valid_[slot] = false;
                break;
            case Block::A1:
                aux_.a1 = v;
                a1_valid_ = w2s1_valid_ = r1_valid_ = r2_valid_ = false;
                slot_valid_.assign(slot_valid_.size(), false);
                slot_e_valid_.assign(slot_e_valid_.size(), false);
                break;
            case Block::D1:
                aux_.d1.at(slot) = v;
                slot_valid_[slot] = slot_e_valid_[slot] = false;
                break;
            case Block::W2:
                params_.W2 = v;
                w2s1_valid_ = r2_valid_ = false;
                slot_valid_.assign(slot_valid_.size(), false);
                slot_e_valid_.assign(slot_e_valid_.size(), false);
                break;
            case Block::A2:
                aux_.a2 = v;
                a2_valid_ = r2_valid_ = b0_valid_ = false;
                slot_b_valid_.assign(slot_b_valid_.size(), false);
                break;
            case Block::D2:
                aux_.d2.at(slot) = v;
                slot_e_valid_[slot] = slot_b_valid_[slot] = false;
                break;
            case Block::Q:
                aux_.q.at(slot) = v;
                slot_e_valid_[slot] = slot_b_valid_[slot] = false;
                break;
        }
    }

    LossBreakdown loss() {
        const Core& c = core();
        LossBreakdown out;
        const double inv_n = 1.0 / static_cast<double>(batch_size());
        out.residual_term = c.r.squaredNorm() * inv_n;
        out.penalty_terms = c.terms;
        for (auto& t : out.penalty_terms) t.second *= c.w3 * inv_n;
        out.total = out.residual_term;
        for (const auto& t : out.penalty_terms) out.total += t.second;
        return out;
    }

    double total() { return loss().total; }

    PenaltyAssembly penalties() {
        const Core& c = core();
        PenaltyAssembly pa;
        pa.omega_a1_1 = c.w3 * c.om_a1_1;
        pa.omega_a2_1 = c.w3 * c.om_a2_1;
        pa.diag_a1_1 = c.Da1_1sq.cwiseSqrt();
        pa.diag_a2_1 = c.Da2_1sq.cwiseSqrt();
        for (std::size_t j = 0; j < slot_count(); ++j) {
            const SlotCore& s = c.slot[j];
            SlotPenalty sp;
            sp.label = bundle_.slots[j].label;
            sp.has_q = aux_.has_q(j);
            sp.omega_a1_2 = c.w3 * s.om_a1_2;
            sp.omega_a1_3 = c.w3 * s.om_a1_3;
            sp.omega_a2_2 = c.w3 * s.om_a2_2;
            sp.omega_d1_1 = c.w3 * s.om_d1_1;
            sp.omega_d1_2 = c.w3 * s.om_d1_2;
            sp.omega_d2_1 = c.w3 * s.om_d2_1;
            sp.omega_d2_2 = c.w3 * s.om_d2_2;
            sp.omega_q = c.w3 * s.om_q;
            sp.diag_a1_2 = s.Da1_2sq.cwiseSqrt();
            sp.diag_a1_3 = s.Da1_3sq.cwiseSqrt();
            sp.diag_a2_2 = s.Da2_2sq.cwiseSqrt();
            sp.diag_d1_2 = s.Dd1_2sq.cwiseSqrt();
            sp.diag_d2_1 = s.Dd2_1sq.cwiseSqrt();
            pa.slots.push_back(std::move(sp));
        }
        return pa;
    }

    /// Penalty sum with the common |W3|_F^2 factor removed (times N). It is
    /// the ridge weight of the W3 normal equations.
    double ridge_lambda() { return core().penalty_tilde; }

    /// Matrix B with residual + Y = W3 B + b3 K.
    const Matrix& output_basis() { return core().B; }

    /// Column weights of the b1 / b2 subproblems: sum_n w_n |W X + b 1^T - a|^2.
    RowVector b1_weights() { return core().w3 * core().A1t; }
    RowVector b2_weights() { return core().w3 * core().A2t; }

    const Matrix& sigma_a1() {
        refresh();
        return s1_;
    }

    /// Gradient of the separated loss with respect to one variable block.
    Matrix gradient(Block b, std::size_t slot = 0,
                    GradientConvention conv = GradientConvention::Full) {
        const Core& c = core();
        const bool full = conv == GradientConvention::Full;
        const double inv_n = 1.0 / static_cast<double>(batch_size());
        const Eigen::ArrayXd w3 = params_.W3.transpose().array();
        const RowVector delta = 2.0 * c.r;
        Matrix g;
        switch (b) {
            case Block::W1Column: {
                const SlotCore& s = c.slot.at(slot);
                const Eigen::Index col = bundle_.slots[slot].column;
                const RowVector a1w = c.w3 * c.A1t.cwiseProduct(ds_.X.row(col));
                g = 2.0 * c.R1 * a1w.transpose() + 2.0 * c.w3 * (s.E1 * s.B1t.transpose());
                if (full) g += 2.0 * dP_dcol(c, slot) * params_.W1.col(col);
                break;
            }
            case Block::A1: {
                g = -2.0 * c.w3 * (c.R1.array().rowwise() * c.A1t.array()).matrix();
                const Matrix back2 = 2.0 * c.w3 * (c.R2.array().rowwise() * c.A2t.array()).matrix();
                Matrix inner = params_.W2.transpose() * back2;
                g.array() += ds1_.array() * inner.array();
                for (std::size_t j = 0; j < slot_count(); ++j) {
                    const SlotCore& s = c.slot[j];
                    const Matrix& d1 = aux_.d1[j];
                    const Matrix be2 = 2.0 * c.w3 * (s.E2.array().rowwise() * s.B2t.array()).matrix();
                    g.array() += dds1_.array() * d1.array() * (params_.W2.transpose() * be2).array();
                    if (aux_.has_q(j)) {
                        const Matrix beq = 2.0 * c.w3 * s.om_q * s.Eq;
                        g.array() += ddds1_.array() * d1.array().square() *
                                     (params_.W2.transpose() * beq).array();
                    }
                }
                break;
            }
            case Block::D1: {
                const SlotCore& s = c.slot.at(slot);
                const Matrix& d1 = aux_.d1[slot];
                g = -2.0 * c.w3 * (s.E1.array().rowwise() * s.B1t.array()).matrix();
                const Matrix be2 = 2.0 * c.w3 * (s.E2.array().rowwise() * s.B2t.array()).matrix();
                g.array() += ds1_.array() * (params_.W2.transpose() * be2).array();
                if (aux_.has_q(slot)) {
                    const Matrix beq = 2.0 * c.w3 * s.om_q * s.Eq;
                    g.array() += 2.0 * dds1_.array() * d1.array() * (params_.W2.transpose() * beq).array();
                }
                if (full) {
                    const double h = s.h;
                    const RowVector coef =
                        c.w3 * (c.om_a1_1 * c.r1.array() * (s.g + h * s.n2.array()) +
                                h * c.r1.array() * (s.om_a1_2 + s.om_a1_3) + s.om_d1_2 * h * s.e1.array())
                                   .matrix();
                    g.array() += 2.0 * (d1.array().rowwise() * coef.array());
                }
                break;
            }
            case Block::W2: {
                const Matrix back2 = 2.0 * c.w3 * (c.R2.array().rowwise() * c.A2t.array()).matrix();
                g = back2 * s1_.transpose();
                for (std::size_t j = 0; j < slot_count(); ++j) {
                    const SlotCore& s = c.slot[j];
                    const SlotCache& sc = slot_cache_[j];
                    const Matrix be2 = 2.0 * c.w3 * (s.E2.array().rowwise() * s.B2t.array()).matrix();
                    g += be2 * sc.t1.transpose();
                    if (aux_.has_q(j)) g += (2.0 * c.w3 * s.om_q) * (s.Eq * sc.u1.transpose());
                }
                if (full) g += 2.0 * dP_dw2(c) * params_.W2;
                break;
            }
            case Block::A2: {
                g = -2.0 * c.w3 * (c.R2.array().rowwise() * c.A2t.array()).matrix();
                Matrix inner = ds2_.array().rowwise() * delta.cwiseProduct(bundle_.K).array();
                for (std::size_t j = 0; j < slot_count(); ++j) {
                    const DerivativeSlot& ds = bundle_.slots[j];
                    const Matrix& d2 = aux_.d2[j];
                    inner.array() += (dds2_.array() * d2.array()).rowwise() *
                                     delta.cwiseProduct(ds.first).array();
                    if (aux_.has_q(j)) {
                        inner.array() += (ddds2_.array() * d2.array().square() +
                                          dds2_.array() * aux_.q[j].array())
                                             .rowwise() *
                                         delta.cwiseProduct(*ds.second).array();
                    }
                }
                g.array() += inner.array().colwise() * w3;
                break;
            }
            case Block::D2: {
                const SlotCore& s = c.slot.at(slot);
                const DerivativeSlot& ds = bundle_.slots[slot];
                const Matrix& d2 = aux_.d2[slot];
                g = -2.0 * c.w3 * (s.E2.array().rowwise() * s.B2t.array()).matrix();
                Matrix inner = ds2_.array().rowwise() * delta.cwiseProduct(ds.first).array();
                if (aux_.has_q(slot))
                    inner.array() += 2.0 * ((dds2_.array() * d2.array()).rowwise() *
                                            delta.cwiseProduct(*ds.second).array());
                g.array() += inner.array().colwise() * w3;
                if (full) {
                    const double h = s.h;
                    const RowVector coef =
                        c.w3 * (c.om_a1_1 * c.r1.array() * (s.g + h * s.n1.array()) +
                                c.om_a2_1 * c.r2.array() * s.g + s.om_a2_2 * h * c.r2.array() +
                                s.om_a1_3 * h * c.r1.array() + s.om_d1_2 * h * s.e1.array() +
                                s.om_d2_1 * h * s.e2.array())
                                   .matrix();
                    g.array() += 2.0 * (d2.array().rowwise() * coef.array());
                }
                break;
            }
            case Block::Q: {
                if (!aux_.has_q(slot)) throw std::invalid_argument("gradient: slot has no q variable");
                const SlotCore& s = c.slot.at(slot);
                const DerivativeSlot& ds = bundle_.slots[slot];
                const Matrix& q = aux_.q[slot];
                g = -2.0 * c.w3 * s.om_q * s.Eq;
                g.array() += (ds2_.array().rowwise() * delta.cwiseProduct(*ds.second).array()).colwise() * w3;
                if (full) {
                    const RowVector coef =
                        c.w3 * s.h * (c.om_a1_1 * c.r1.array() + c.om_a2_1 * c.r2.array()).matrix();
                    g.array() += 2.0 * (q.array().rowwise() * coef.array());
                }
                break;
            }
        }
        return g * inv_n;
    }

private:
    struct SlotCache {
        Matrix t1;    // sigma'(a1) * d1
        Matrix u1;    // sigma''(a1) * d1 * d1
        Matrix W2t1;
        Matrix W2u1;
    };

    // Quantities derived from the iterate. Weights om_* omit the common
    // |W3|^2 factor, which is carried separately as w3.
    struct SlotCore {
        double g = 0.0;  // |first|_inf^2
        double h = 0.0;  // |second|_inf^2, 0 without q
        double c = 0.0;  // |W1(:, col)|^2
        Matrix E1, E2, Eq;
        RowVector e1, e2, eq, n1, n2, nq;
        RowVector Da1_2sq, Da1_3sq, Da2_2sq, Dd1_2sq, Dd2_1sq;
        double om_a1_2 = 0, om_a1_3 = 0, om_a2_2 = 0, om_d1_1 = 0, om_d1_2 = 0, om_d2_1 = 0,
               om_d2_2 = 0, om_q = 0;
        RowVector B1t, B2t;  // column weights of |E1|^2 and |E2|^2
        Matrix Bpart;        // this slot's share of the output basis
    };

    struct Core {
        Matrix B0;  // sigma(a2) * K
        Matrix B;
        RowVector r;  // residual minus Y
        Matrix R1, R2;
        RowVector r1, r2;
        double w2 = 0.0, w3 = 0.0;
        double om_a1_1 = 0.0, om_a2_1 = 0.0;
        RowVector Da1_1sq, Da2_1sq;
        RowVector A1t, A2t;  // column weights of |R1|^2 and |R2|^2
        std::vector<SlotCore> slot;
        PenaltyTerms terms;  // without the w3 factor and 1/N
        double penalty_tilde = 0.0;
    };

    void check_shapes() const {
        params_.validate();
        const Eigen::Index m = params_.width(), n = ds_.size();
        if (bundle_.size() != n) throw std::invalid_argument("separated loss: bundle/batch mismatch");
        if (ds_.X.rows() != params_.input_dim())
            throw std::invalid_argument("separated loss: batch/network dimension mismatch");
        const auto layout = aux_layout(bundle_.kind, params_.input_dim());
        if (layout.size() != bundle_.slots.size() || aux_.d1.size() != layout.size() ||
            aux_.d2.size() != layout.size() || aux_.q.size() != layout.size())
            throw std::invalid_argument("separated loss: auxiliary slot count mismatch");
        auto ok = [&](const Matrix& a) { return a.rows() == m && a.cols() == n; };
        if (!ok(aux_.a1) || !ok(aux_.a2)) throw std::invalid_argument("separated loss: a_l shape");
        for (std::size_t j = 0; j < layout.size(); ++j) {
            if (bundle_.slots[j].column != layout[j].column ||
                bundle_.slots[j].has_second() != layout[j].has_q)
                throw std::invalid_argument("separated loss: bundle slots do not match layout");
            if (!ok(aux_.d1[j]) || !ok(aux_.d2[j]))
                throw std::invalid_argument("separated loss: d_li shape");
            if (layout[j].has_q ? !ok(aux_.q[j]) : aux_.q[j].size() != 0)
                throw std::invalid_argument("separated loss: q_i shape");
        }
    }

    void invalidate_all() {
        a1_valid_ = a2_valid_ = w2s1_valid_ = core_valid_ = false;
        r1_valid_ = r2_valid_ = b0_valid_ = false;
        slot_valid_.assign(bundle_.slots.size(), false);
        slot_e_valid_.assign(bundle_.slots.size(), false);
        slot_b_valid_.assign(bundle_.slots.size(), false);
        slot_cache_.resize(bundle_.slots.size());
    }

    void refresh() {
        if (!a1_valid_) {
            s1_ = elementwise(act_.eval, aux_.a1);
            ds1_ = elementwise(act_.d1, aux_.a1);
            dds1_ = elementwise(act_.d2, aux_.a1);
            ddds1_ = elementwise(act_.d3, aux_.a1);
            a1_valid_ = true;
        }
        if (!a2_valid_) {
            s2_ = elementwise(act_.eval, aux_.a2);
            ds2_ = elementwise(act_.d1, aux_.a2);
            dds2_ = elementwise(act_.d2, aux_.a2);
            ddds2_ = elementwise(act_.d3, aux_.a2);
            a2_valid_ = true;
        }
        if (!w2s1_valid_) {
            W2s1_.noalias() = params_.W2 * s1_;
            w2s1_valid_ = true;
        }
        for (std::size_t j = 0; j < slot_valid_.size(); ++j) {
            if (slot_valid_[j]) continue;
            SlotCache& sc = slot_cache_[j];
            const Matrix& d1 = aux_.d1[j];
            sc.t1 = ds1_.cwiseProduct(d1);
            sc.W2t1.noalias() = params_.W2 * sc.t1;
            if (aux_.has_q(j)) {
                sc.u1 = dds1_.array() * d1.array().square();
                sc.W2u1.noalias() = params_.W2 * sc.u1;
            }
            slot_valid_[j] = true;
        }
    }

    const Core& core() {
        if (core_valid_) return core_;
        refresh();
        core_valid_ = true;
        Core& c = core_;
        const Eigen::Index n = ds_.size();
        const std::size_t ns = slot_count();
        c.slot.resize(ns);

        // Residual part; per-slot shares are rebuilt only when stale.
        if (!b0_valid_) {
            c.B0 = s2_.array().rowwise() * bundle_.K.array();
            b0_valid_ = true;
        }
        c.B = c.B0;
        for (std::size_t j = 0; j < ns; ++j) {
            SlotCore& s = c.slot[j];
            if (!slot_b_valid_[j]) {
                const DerivativeSlot& ds = bundle_.slots[j];
                const Matrix& d2 = aux_.d2[j];
                s.Bpart = (ds2_.array() * d2.array()).rowwise() * ds.first.array();
                if (aux_.has_q(j))
                    s.Bpart.array() +=
                        (dds2_.array() * d2.array().square() + ds2_.array() * aux_.q[j].array())
                            .rowwise() *
                        ds.second->array();
                slot_b_valid_[j] = true;
            }
            c.B += s.Bpart;
        }
        c.r = params_.W3 * c.B + params_.b3 * bundle_.K - ds_.Y;

        // Constraint residuals and their column norms.
        if (!r1_valid_) {
            c.R1 = ((params_.W1 * ds_.X).colwise() + params_.b1) - aux_.a1;
            c.r1 = c.R1.colwise().squaredNorm();
            r1_valid_ = true;
        }
        if (!r2_valid_) {
            c.R2 = (W2s1_.colwise() + params_.b2) - aux_.a2;
            c.r2 = c.R2.colwise().squaredNorm();
            r2_valid_ = true;
        }
        c.w2 = params_.W2.squaredNorm();
        c.w3 = params_.W3.squaredNorm();
        const double kk = bundle_.inf_norms.K * bundle_.inf_norms.K;

        c.Da2_1sq = RowVector::Constant(n, kk);
        for (std::size_t j = 0; j < ns; ++j) {
            SlotCore& s = c.slot[j];
            const DerivativeSlot& ds = bundle_.slots[j];
            const SlotCache& sc = slot_cache_[j];
            s.g = ds.first_inf * ds.first_inf;
            s.h = aux_.has_q(j) ? ds.second_inf * ds.second_inf : 0.0;
            s.c = params_.W1.col(ds.column).squaredNorm();
            if (slot_e_valid_[j]) {
                c.Da2_1sq += s.g * s.n2 + s.h * s.nq;
                continue;
            }
            slot_e_valid_[j] = true;
            s.E1 = (-aux_.d1[j]).colwise() + params_.W1.col(ds.column);
            s.E2 = sc.W2t1 - aux_.d2[j];
            s.e1 = s.E1.colwise().squaredNorm();
            s.e2 = s.E2.colwise().squaredNorm();
            s.n1 = aux_.d1[j].colwise().squaredNorm();
            s.n2 = aux_.d2[j].colwise().squaredNorm();
            if (aux_.has_q(j)) {
                s.Eq = sc.W2u1 - aux_.q[j];
                s.eq = s.Eq.colwise().squaredNorm();
                s.nq = aux_.q[j].colwise().squaredNorm();
            } else {
                s.Eq.resize(0, 0);
                s.eq = RowVector::Zero(n);
                s.nq = RowVector::Zero(n);
            }
            c.Da2_1sq += s.g * s.n2 + s.h * s.nq;
        }
        c.Da1_1sq = c.Da2_1sq;
        for (std::size_t j = 0; j < ns; ++j) {
            SlotCore& s = c.slot[j];
            c.Da1_1sq.array() += s.g * s.n1.array() + s.h * s.n1.array() * s.n2.array();
            s.Da1_2sq = s.h * s.n1;
            s.Da2_2sq = s.h * s.n2;
            s.Da1_3sq = s.h * (s.n1 + s.n2);
            s.Dd1_2sq = (s.g + s.h * (s.n1 + s.n2).array()).matrix();
            s.Dd2_1sq = (s.g + s.h * s.n2.array()).matrix();
        }

        // Weights, without the |W3|^2 factor.
        c.om_a1_1 = c.w2;
        c.om_a2_1 = 1.0;
        c.A1t = c.om_a1_1 * c.Da1_1sq;
        c.A2t = c.om_a2_1 * c.Da2_1sq;
        for (std::size_t j = 0; j < ns; ++j) {
            SlotCore& s = c.slot[j];
            s.om_a1_2 = c.w2 * s.c;
            s.om_a1_3 = c.w2 * c.w2 * s.c;
            s.om_a2_2 = c.w2 * s.c;
            s.om_d1_1 = s.h * (s.om_a1_2 + s.om_a1_3);
            s.om_d1_2 = c.w2;
            s.om_d2_1 = 1.0;
            s.om_d2_2 = s.h * s.om_a1_2;
            s.om_q = s.h;
            c.A1t += s.om_a1_2 * s.Da1_2sq + s.om_a1_3 * s.Da1_3sq;
            c.A2t += s.om_a2_2 * s.Da2_2sq;
            s.B1t = (s.om_d1_1 + s.om_d1_2 * s.Dd1_2sq.array()).matrix();
            s.B2t = (s.om_d2_1 * s.Dd2_1sq.array() + s.om_d2_2).matrix();
        }

        // Named terms in a fixed order.
        c.terms.clear();
        auto wsum = [](const RowVector& w, const RowVector& v) { return w.dot(v); };
        c.terms.emplace_back("a1^1", c.om_a1_1 * wsum(c.Da1_1sq, c.r1));
        for (std::size_t j = 0; j < ns; ++j) {
            if (!aux_.has_q(j)) continue;
            const SlotCore& s = c.slot[j];
            const std::string& lab = bundle_.slots[j].label;
            c.terms.emplace_back("a1^2[" + lab + "]", s.om_a1_2 * wsum(s.Da1_2sq, c.r1));
            c.terms.emplace_back("a1^3[" + lab + "]", s.om_a1_3 * wsum(s.Da1_3sq, c.r1));
        }
        c.terms.emplace_back("a2^1", c.om_a2_1 * wsum(c.Da2_1sq, c.r2));
        for (std::size_t j = 0; j < ns; ++j) {
            if (!aux_.has_q(j)) continue;
            const SlotCore& s = c.slot[j];
            c.terms.emplace_back("a2^2[" + bundle_.slots[j].label + "]", s.om_a2_2 * wsum(s.Da2_2sq, c.r2));
        }
        for (std::size_t j = 0; j < ns; ++j) {
            const SlotCore& s = c.slot[j];
            const std::string& lab = bundle_.slots[j].label;
            const bool q = aux_.has_q(j);
            if (q) c.terms.emplace_back("d1^1[" + lab + "]", s.om_d1_1 * s.e1.sum());
            c.terms.emplace_back("d1^2[" + lab + "]", s.om_d1_2 * wsum(s.Dd1_2sq, s.e1));
            c.terms.emplace_back("d2^1[" + lab + "]", s.om_d2_1 * wsum(s.Dd2_1sq, s.e2));
            if (q) {
                c.terms.emplace_back("d2^2[" + lab + "]", s.om_d2_2 * s.e2.sum());
                c.terms.emplace_back("q[" + lab + "]", s.om_q * s.eq.sum());
            }
        }
        c.penalty_tilde = 0.0;
        for (const auto& t : c.terms) c.penalty_tilde += t.second;
        return c;
    }

    // d P / d |W1(:, col_j)|^2 (P includes the w3 factor, excludes 1/N).
    static double dP_dcol(const Core& c, std::size_t j) {
        const SlotCore& s = c.slot[j];
        const double w2 = c.w2;
        return c.w3 * (w2 * s.Da1_2sq.dot(c.r1) + w2 * w2 * s.Da1_3sq.dot(c.r1) +
                       w2 * s.Da2_2sq.dot(c.r2) + s.h * (w2 + w2 * w2) * s.e1.sum() +
                       s.h * w2 * s.e2.sum());
    }

    // d P / d |W2|_F^2.
    static double dP_dw2(const Core& c) {
        const double w2 = c.w2;
        double acc = c.Da1_1sq.dot(c.r1);
        for (const SlotCore& s : c.slot) {
            acc += s.c * (s.Da1_2sq.dot(c.r1) + 2.0 * w2 * s.Da1_3sq.dot(c.r1) + s.Da2_2sq.dot(c.r2) +
                          s.h * (1.0 + 2.0 * w2) * s.e1.sum() + s.h * s.e2.sum());
            acc += s.Dd1_2sq.dot(s.e1);
        }
        return c.w3 * acc;
    }

    ActivationBundle act_;
    CoeffBundle bundle_;
    Dataset ds_;
    NetworkParams params_;
    AuxState aux_;

    bool a1_valid_ = false, a2_valid_ = false, w2s1_valid_ = false, core_valid_ = false;
    bool r1_valid_ = false, r2_valid_ = false, b0_valid_ = false;
    std::vector<bool> slot_valid_, slot_e_valid_, slot_b_valid_;
    Matrix s1_, ds1_, dds1_, ddds1_, s2_, ds2_, dds2_, ddds2_, W2s1_;
    std::vector<SlotCache> slot_cache_;
    Core core_;
};

inline PenaltyAssembly assemble_penalties(const NetworkParams& p, const AuxState& aux,
                                          const CoeffBundle& bundle, const Dataset& ds,
                                          const ActivationBundle& act) {
    SeparatedObjective obj(act, bundle, ds, p, aux);
    return obj.penalties();
}

/// Separated loss value with its residual term and named penalty terms.
inline LossBreakdown lysep_loss(const NetworkParams& p, const AuxState& aux, const CoeffBundle& bundle,
                                const Dataset& ds, const ActivationBundle& act) {
    SeparatedObjective obj(act, bundle, ds, p, aux);
    return obj.loss();
}

struct ConsistencyReport {
    double factor = 0.0;
    double constant = 0.0;
    double bound = 0.0;  // factor * C * J_S
    bool satisfied = false;
};

/// factor 2(d+1), 2d+3 or 2(d+2) by kind; satisfied iff J <= bound + 1e-12.
inline ConsistencyReport check_consistency(double J, double J_S, int d, ProblemKind kind, double C) {
    if (J < 0.0 || J_S < 0.0) throw std::invalid_argument("check_consistency: negative loss");
    ConsistencyReport rep;
    switch (kind) {
        case ProblemKind::Elliptic: rep.factor = 2.0 * (d + 1); break;
        case ProblemKind::Parabolic: rep.factor = 2.0 * d + 3.0; break;
        case ProblemKind::Hyperbolic: rep.factor = 2.0 * (d + 2); break;
    }
    rep.constant = C;
    rep.bound = rep.factor * C * J_S;
    rep.satisfied = J <= rep.bound + 1e-12;
    return rep;
}

}  // namespace lysep
