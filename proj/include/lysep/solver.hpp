#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "lysep/pinn.hpp"
#include "lysep/sampling.hpp"
#include "lysep/separated.hpp"

namespace lysep {

enum class StepRule {
    Fixed,        // x -= lr_k * grad
    Backtracking, // Armijo search warm-started from the last accepted step, capped by lr_k
};

struct SolverConfig {
    int iters = 2000;
    double lr = 1e-3;
    double lr_decay = 1.0;
    double ridge_floor = 1e-12;
    double aux_lr_scale = 1.0;  // step multiplier for a1, d1, a2, d2, q
    int log_every = 10;
    GradientConvention convention = GradientConvention::Full;
    StepRule step_rule = StepRule::Backtracking;

    void validate() const {
        if (iters < 1) throw std::invalid_argument("solver: iters must be >= 1");
        if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("solver: lr must be > 0");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("solver: lr_decay must be in (0,1]");
        if (!(ridge_floor >= 0.0)) throw std::invalid_argument("solver: ridge_floor must be >= 0");
        if (!(aux_lr_scale > 0.0) || !std::isfinite(aux_lr_scale))
            throw std::invalid_argument("solver: aux_lr_scale must be > 0");
        if (log_every < 1) throw std::invalid_argument("solver: log_every must be >= 1");
    }
};

/// Outcome of a closed-form solve that may leave its variable untouched.
struct SolveStatus {
    bool updated = true;
    std::string message;
};

/// Minimizer of the separated loss over W3, i.e. the solution of
///   W3 (B B^T + (lambda + floor) I) = (Y - b3 K) B^T.
/// Solved as the stacked least-squares problem [B^T; sqrt(lambda + floor) I]
/// with a pivoted QR, which avoids squaring the condition number of B.
/// Throws std::runtime_error if no finite solution is produced.
inline RowVector solve_w3(SeparatedObjective& obj, double ridge_floor = 1e-12) {
    const Matrix& B = obj.output_basis();
    const double mu = obj.ridge_lambda() + ridge_floor;
    const Eigen::Index m = B.rows(), n = B.cols();
    const Dataset& ds = obj.dataset();
    Matrix A(n + m, m);
    A.topRows(n) = B.transpose();
    A.bottomRows(m) = std::sqrt(mu) * Matrix::Identity(m, m);
    Vector rhs = Vector::Zero(n + m);
    rhs.head(n) = (ds.Y - obj.params().b3 * obj.bundle().K).transpose();
    Vector w = A.colPivHouseholderQr().solve(rhs);
    if (!w.allFinite()) {
        w = A.completeOrthogonalDecomposition().solve(rhs);
        if (!w.allFinite()) throw std::runtime_error("solve_w3: singular least-squares system");
    }
    return w.transpose();
}

namespace detail {

// Row-wise weighted mean of `target` with column weights w.
inline std::optional<Vector> weighted_row_mean(const Matrix& target, const RowVector& w) {
    const double total = w.sum();
    if (!(total > 0.0) || !std::isfinite(total)) return std::nullopt;
    return Vector(target * w.transpose() / total);
}

}  // namespace detail

/// Minimizer over b1: per-row weighted mean of (a1 - W1 X).
inline SolveStatus solve_b1(SeparatedObjective& obj) {
    const RowVector w = obj.b1_weights();
    const Matrix target = obj.aux().a1 - obj.params().W1 * obj.dataset().X;
    auto b = detail::weighted_row_mean(target, w);
    if (!b) return {false, "solve_b1: all weights vanish, b1 left unchanged"};
    obj.set_b1(*b);
    return {};
}

/// Minimizer over b2: per-row weighted mean of (a2 - W2 sigma(a1)).
inline SolveStatus solve_b2(SeparatedObjective& obj) {
    const RowVector w = obj.b2_weights();
    const Matrix target = obj.aux().a2 - obj.params().W2 * obj.sigma_a1();
    auto b = detail::weighted_row_mean(target, w);
    if (!b) return {false, "solve_b2: all weights vanish, b2 left unchanged"};
    obj.set_b2(*b);
    return {};
}

/// Least-squares b3 for b3 K = Y - W3 B.
inline SolveStatus solve_b3(SeparatedObjective& obj) {
    const RowVector& K = obj.bundle().K;
    const double kk = K.squaredNorm();
    if (!(kk > 0.0)) return {false, "solve_b3: K vanishes on the batch, b3 left unchanged"};
    const RowVector target = obj.dataset().Y - obj.params().W3 * obj.output_basis();
    obj.set_b3(K.dot(target) / kk);
    return {};
}

/// One gradient step on a variable block. Throws on a non-finite gradient.
inline void gd_step(SeparatedObjective& obj, Block b, std::size_t slot, double lr,
                    GradientConvention conv = GradientConvention::Full) {
    const Matrix g = obj.gradient(b, slot, conv);
    if (!g.allFinite())
        throw std::runtime_error(std::string("gd_step: non-finite gradient for ") + to_string(b));
    if (lr == 0.0) return;
    obj.set_value(b, slot, obj.value(b, slot) - lr * g);
}

/// Gradient step with Armijo backtracking: halves the step from `t0` until
/// J_S(x - t g) <= J_S(x) - 1e-4 t |g|^2, at most 60 times. Returns the
/// accepted step, or 0 with the variable unchanged. `trials`, if given,
/// receives the number of loss evaluations.
inline double backtracking_step(SeparatedObjective& obj, Block b, std::size_t slot, double t0,
                                GradientConvention conv = GradientConvention::Full,
                                int* trials = nullptr) {
    const Matrix g = obj.gradient(b, slot, conv);
    if (!g.allFinite())
        throw std::runtime_error(std::string("gd_step: non-finite gradient for ") + to_string(b));
    const double gg = g.squaredNorm();
    if (gg == 0.0 || t0 == 0.0) return 0.0;
    const double f0 = obj.total();
    const Matrix x0 = obj.value(b, slot);
    double t = t0;
    for (int tries = 1; tries <= 60; ++tries, t *= 0.5) {
        obj.set_value(b, slot, x0 - t * g);
        const double f = obj.total();
        if (trials) *trials = tries;
        if (std::isfinite(f) && f <= f0 - 1e-4 * t * gg) return t;
    }
    obj.set_value(b, slot, x0);
    return 0.0;
}

struct TrajectoryRow {
    int iter = 0;
    double loss_sep = 0.0;   // J_S
    double loss_orig = 0.0;  // J
    double bound = 0.0;
    bool bound_ok = false;
    std::optional<double> test_error;
};

struct LysepResult {
    NetworkParams params;
    AuxState aux;
    std::vector<TrajectoryRow> trajectory;
    bool diverged = false;
    int failed_iteration = -1;
    std::string message;
    std::vector<std::string> warnings;
};

/// Optional test set for logging the relative l2 error of the ansatz.
struct TestSet {
    Dataset data;
    RowVector truth;
};

struct LysepHooks {
    /// Called for every sub-update, in order, with the block name and slot.
    std::function<void(const std::string& step, std::size_t slot)> trace;
    /// Called for every logged trajectory row.
    std::function<void(const TrajectoryRow&)> on_row;
};

inline double test_error(const PdeProblem& prob, const NetworkParams& p, const ActivationBundle& act,
                         const TestSet& ts) {
    const RowVector phi = forward(p, act, ts.data.X).out;
    return l2_relative_error(ansatz_value(prob, phi, ts.data), ts.truth);
}

/// One pass of the alternating update order over a separated objective:
/// W1 columns, b1, a1, d1, W2, b2, a2, d2, q, W3, b3. Gradient blocks move by
/// at most `lr` (times aux_lr_scale for the auxiliary blocks), so lr = 0
/// leaves them untouched and only the closed-form solves act. The step
/// memory of the backtracking rule persists across calls.
class AlternatingSweep {
public:
    using Trace = std::function<void(const std::string& step, std::size_t slot)>;

    AlternatingSweep(SeparatedObjective& obj, SolverConfig cfg, Trace trace = {})
        : obj_(obj), cfg_(std::move(cfg)), trace_(std::move(trace)),
          last_step_(7, std::vector<double>(obj.slot_count(), 0.0)) {}

    /// Runs one sweep at step cap `lr` (iteration `k` only labels warnings).
    /// Returns whether any variable or next trial step changed. Throws on a
    /// non-finite gradient or W3 solve.
    bool run(double lr, std::vector<std::string>* warnings = nullptr, int k = 0) {
        if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("sweep: lr must be >= 0");
        lr_ = lr;
        moved_ = false;
        const std::size_t ns = obj_.slot_count();
        auto note = [&](const SolveStatus& st) {
            if (!st.updated && warnings) warnings->push_back(st.message + " (iteration " + std::to_string(k) + ")");
        };
        for (std::size_t j = 0; j < ns; ++j) {
            trace("W1", j);
            step(Block::W1Column, j);
        }
        trace("b1", 0);
        solve([&] { note(solve_b1(obj_)); }, [&] { return Vector(obj_.params().b1); });
        trace("a1", 0);
        step(Block::A1, 0);
        for (std::size_t j = 0; j < ns; ++j) {
            trace("d1", j);
            step(Block::D1, j);
        }
        trace("W2", 0);
        step(Block::W2, 0);
        trace("b2", 0);
        solve([&] { note(solve_b2(obj_)); }, [&] { return Vector(obj_.params().b2); });
        trace("a2", 0);
        step(Block::A2, 0);
        for (std::size_t j = 0; j < ns; ++j) {
            trace("d2", j);
            step(Block::D2, j);
        }
        for (std::size_t j = 0; j < ns; ++j) {
            if (!obj_.aux().has_q(j)) continue;
            trace("q", j);
            step(Block::Q, j);
        }
        trace("W3", 0);
        solve([&] { obj_.set_W3(solve_w3(obj_, cfg_.ridge_floor)); }, [&] { return RowVector(obj_.params().W3); });
        trace("b3", 0);
        solve([&] { note(solve_b3(obj_)); }, [&] { return obj_.params().b3; });
        return moved_;
    }

private:
    void trace(const char* step, std::size_t j) const {
        if (trace_) trace_(step, j);
    }

    void step(Block b, std::size_t j) {
        const bool aux_block = b != Block::W1Column && b != Block::W2;
        const double cap = aux_block ? lr_ * cfg_.aux_lr_scale : lr_;
        if (cfg_.step_rule == StepRule::Fixed) {
            gd_step(obj_, b, j, cap, cfg_.convention);
            moved_ = moved_ || cap != 0.0;
            return;
        }
        // Next trial step per (block, slot); 0 means start from the cap.
        double& next = last_step_[static_cast<std::size_t>(b)][j];
        const double t0 = next > 0.0 ? std::min(next, cap) : cap;
        int trials = 0;
        const double t = backtracking_step(obj_, b, j, t0, cfg_.convention, &trials);
        if (t > 0.0) {
            // Grow after a first-try acceptance, otherwise keep the step.
            next = trials == 1 ? 2.0 * t : t;
            moved_ = true;
        } else if (cfg_.lr_decay != 1.0 && !(next > 0.0 && next <= cap * cfg_.lr_decay)) {
            moved_ = true;  // next trial step differs
        }
    }

    template <class Fn, class Get>
    void solve(Fn&& fn, Get&& get) {
        const auto before = get();
        fn();
        if (!(get() == before)) moved_ = true;
    }

    SeparatedObjective& obj_;
    SolverConfig cfg_;
    Trace trace_;
    std::vector<std::vector<double>> last_step_;
    double lr_ = 0.0;
    bool moved_ = false;
};

/// Alternating minimization of the separated loss. Rows are logged at
/// iteration 0, every log_every iterations and after the last iteration.
inline LysepResult run_lysep(const PdeProblem& prob, const NetworkParams& p0, const ActivationBundle& act,
                             const Dataset& ds, const SolverConfig& cfg,
                             const std::optional<TestSet>& test = std::nullopt,
                             const LysepHooks& hooks = {}) {
    cfg.validate();
    const CoeffBundle bundle = coeff_bundle(prob, ds);
    const double C = theorem_constants(act).c;
    SeparatedObjective obj(act, bundle, ds, p0, feasible_aux(p0, act, ds, prob.kind));

    LysepResult res;
    auto emit = [&](const TrajectoryRow& row) {
        res.trajectory.push_back(row);
        if (hooks.on_row) hooks.on_row(row);
    };
    auto make_row = [&](int k) {
        TrajectoryRow row;
        row.iter = k;
        row.loss_sep = obj.total();
        row.loss_orig = pinn_loss(bundle, obj.params(), act, ds);
        const auto rep = check_consistency(row.loss_orig, row.loss_sep, prob.dim, prob.kind, C);
        row.bound = rep.bound;
        row.bound_ok = rep.satisfied;
        if (test && std::isfinite(row.loss_orig)) row.test_error = test_error(prob, obj.params(), act, *test);
        return row;
    };
    auto log_row = [&](int k) {
        const TrajectoryRow row = make_row(k);
        emit(row);
        return row;
    };
    auto finish = [&]() {
        res.params = obj.params();
        res.aux = obj.aux();
        return res;
    };
    auto fail = [&](int k, const std::string& why) {
        res.diverged = true;
        res.failed_iteration = k;
        res.message = why + " (iteration " + std::to_string(k) + ")";
        TrajectoryRow row;
        row.iter = k;
        row.loss_sep = std::numeric_limits<double>::quiet_NaN();
        row.loss_orig = std::numeric_limits<double>::quiet_NaN();
        row.bound = std::numeric_limits<double>::quiet_NaN();
        emit(row);
    };
    AlternatingSweep sweep(obj, cfg, hooks.trace);

    log_row(0);
    for (int k = 1; k <= cfg.iters; ++k) {
        bool moved = false;
        try {
            moved = sweep.run(cfg.lr * std::pow(cfg.lr_decay, k - 1), &res.warnings, k);
        } catch (const std::exception& e) {
            fail(k, e.what());
            return finish();
        }
        if (k % cfg.log_every == 0 || k == cfg.iters) {
            const TrajectoryRow row = log_row(k);
            if (!std::isfinite(row.loss_sep) || !std::isfinite(row.loss_orig) ||
                row.loss_sep > kDivergenceThreshold) {
                res.diverged = true;
                res.failed_iteration = k;
                res.message = "loss became non-finite or exceeded 1e12 (iteration " + std::to_string(k) + ")";
                return finish();
            }
        }
        if (!moved) {
            // Fixed point: every later iteration reproduces this state exactly.
            const TrajectoryRow base = res.trajectory.back().iter == k ? res.trajectory.back() : make_row(k);
            for (int j = k + 1; j <= cfg.iters; ++j) {
                if (j % cfg.log_every != 0 && j != cfg.iters) continue;
                TrajectoryRow row = base;
                row.iter = j;
                emit(row);
            }
            break;
        }
    }
    return finish();
}

}  // namespace lysep
