#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "support.hpp"

using namespace lysep;
using testkit::rel_err;

namespace {

double phi_at(const NetworkParams& p, const ActivationBundle& act, const Vector& z) {
    return forward(p, act, Matrix(z)).out(0);
}

// psi at (t, x): boundary factor times the time factor of the kind.
double psi_at(const PdeProblem& prob, const NetworkParams& p, const ActivationBundle& act, double t, const Vector& x) {
    Vector z(prob.input_dim());
    if (is_time_dependent(prob.kind)) {
        z(0) = t;
        z.tail(prob.dim) = x;
    } else {
        z = x;
    }
    const double tf = prob.kind == ProblemKind::Elliptic ? 1.0 : prob.kind == ProblemKind::Parabolic ? t : t * t;
    return tf * (x.squaredNorm() - 1.0) * phi_at(p, act, z);
}

// Scalar chain rule for phi, its gradient and Hessian diagonal at one elliptic point.
struct ScalarJet {
    double v = 0.0;
    std::vector<double> g, h;
};

ScalarJet scalar_jet(const NetworkParams& p, const Vector& x) {
    const int M = static_cast<int>(p.width()), d = static_cast<int>(x.size());
    ScalarJet out;
    out.v = p.b3;
    out.g.assign(d, 0.0);
    out.h.assign(d, 0.0);
    std::vector<double> z1(M);
    for (int a = 0; a < M; ++a) {
        z1[a] = p.b1(a);
        for (int j = 0; j < d; ++j) z1[a] += p.W1(a, j) * x(j);
    }
    for (int b = 0; b < M; ++b) {
        double z2 = p.b2(b);
        for (int a = 0; a < M; ++a) z2 += p.W2(b, a) * std::sin(z1[a]);
        out.v += p.W3(b) * std::sin(z2);
        for (int i = 0; i < d; ++i) {
            double dz2 = 0.0, ddz2 = 0.0;
            for (int a = 0; a < M; ++a) {
                dz2 += p.W2(b, a) * std::cos(z1[a]) * p.W1(a, i);
                ddz2 += -p.W2(b, a) * std::sin(z1[a]) * p.W1(a, i) * p.W1(a, i);
            }
            out.g[i] += p.W3(b) * std::cos(z2) * dz2;
            out.h[i] += p.W3(b) * (-std::sin(z2) * dz2 * dz2 + std::cos(z2) * ddz2);
        }
    }
    return out;
}

double scalar_loss_elliptic(const PdeProblem& prob, const NetworkParams& p, const Dataset& ds) {
    double s = 0.0;
    for (Eigen::Index n = 0; n < ds.size(); ++n) {
        const Vector x = ds.X.col(n);
        const ScalarJet j = scalar_jet(p, x);
        const double r2 = x.squaredNorm() - 1.0;
        const double c = prob.coeff_c(x);
        const Vector gc = prob.grad_c(x);
        double op = 0.0;
        for (int i = 0; i < prob.dim; ++i) {
            const double psi_i = 2.0 * x(i) * j.v + r2 * j.g[i];
            const double psi_ii = 2.0 * j.v + 4.0 * x(i) * j.g[i] + r2 * j.h[i];
            op += c * psi_ii + gc(i) * psi_i;
        }
        s += (op - ds.Y(n)) * (op - ds.Y(n));
    }
    return s / static_cast<double>(ds.size());
}

PdeProblem unit_elliptic(int d) {
    PdeProblem p;
    p.kind = ProblemKind::Elliptic;
    p.dim = d;
    p.coeff_c = [](const Vector&) { return 1.0; };
    p.grad_c = [](const Vector& x) { return Vector(Vector::Zero(x.size())); };
    p.source = [](double, const Vector&) { return 0.0; };
    return p;
}

}  // namespace

TEST(Pinn, ZeroParamsGiveZeroResidual) {
    const ActivationBundle act = make_sin_activation();
    for (ProblemKind kind : testkit::kAllKinds) {
        const PdeProblem prob = testkit::toy_problem(kind, 2);
        const Dataset ds = testkit::toy_dataset(prob, 6);
        const NetworkParams p(4, prob.input_dim());
        EXPECT_EQ(pinn_residual(prob, p, act, ds).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_DOUBLE_EQ(pinn_loss(prob, p, act, ds), ds.Y.squaredNorm() / 6.0);
    }
}

TEST(Pinn, ConstantNetworkOnUnitCoefficient) {
    const PdeProblem prob = unit_elliptic(3);
    const Dataset ds = testkit::toy_dataset(prob, 5);
    NetworkParams p(4, 3);
    p.b3 = 0.75;
    const RowVector r = pinn_residual(prob, p, make_sin_activation(), ds);
    for (Eigen::Index n = 0; n < r.size(); ++n) EXPECT_NEAR(r(n), 6.0 * 0.75, 1e-14);
}

TEST(Pinn, ResidualMatchesFiniteDifferenceOperator) {
    const ActivationBundle act = make_sin_activation();
    std::mt19937_64 rng(11);
    for (ProblemKind kind : testkit::kAllKinds) {
        const PdeProblem prob =
            kind == ProblemKind::Elliptic ? manufactured_problem("elliptic2d") : testkit::toy_problem(kind, 2);
        const Dataset ds = testkit::toy_dataset(prob, 5);
        const NetworkParams p = testkit::random_params(4, prob.input_dim(), rng);
        const RowVector r = pinn_residual(prob, p, act, ds);
        const bool timed = is_time_dependent(kind);
        for (Eigen::Index n = 0; n < ds.size(); ++n) {
            const double t = timed ? ds.X(0, n) : 0.0;
            const Vector x = timed ? Vector(ds.X.col(n).tail(prob.dim)) : Vector(ds.X.col(n));
            auto psi = [&](double s, const Vector& y) { return psi_at(prob, p, act, s, y); };
            EXPECT_LE(rel_err(r(n), testkit::fd_operator(prob, psi, t, x), 1e-3), 1e-4) << to_string(kind);
        }
    }
}

TEST(Pinn, LossMatchesScalarLoop) {
    const PdeProblem prob = manufactured_problem("elliptic2d");
    const Dataset ds = testkit::toy_dataset(prob, 10);
    std::mt19937_64 rng(12);
    for (int k = 0; k < 10; ++k) {
        const NetworkParams p = testkit::random_params(5, 2, rng);
        EXPECT_LE(rel_err(pinn_loss(prob, p, make_sin_activation(), ds), scalar_loss_elliptic(prob, p, ds)), 1e-12);
    }
}

TEST(Pinn, ZeroLossWhenTargetsAreTheResidual) {
    const PdeProblem prob = manufactured_problem("elliptic2d");
    std::mt19937_64 rng(13);
    const NetworkParams p = testkit::random_params(5, 2, rng);
    Dataset ds = testkit::toy_dataset(prob, 8);
    ds.Y = pinn_residual(prob, p, make_sin_activation(), ds);
    EXPECT_EQ(pinn_loss(prob, p, make_sin_activation(), ds), 0.0);
}

TEST(Pinn, GradientMatchesFiniteDifferences) {
    const ActivationBundle act = make_sin_activation();
    std::mt19937_64 rng(14);
    double worst = 0.0;
    for (ProblemKind kind : testkit::kAllKinds) {
        const PdeProblem prob = testkit::toy_problem(kind, 2);
        const Dataset ds = testkit::toy_dataset(prob, 8);
        const CoeffBundle bundle = coeff_bundle(prob, ds);
        for (int draw = 0; draw < 10; ++draw) {
            NetworkParams p = testkit::random_params(5, prob.input_dim(), rng);
            const PinnGradient g = pinn_loss_gradient(bundle, p, act, ds);
            EXPECT_DOUBLE_EQ(g.loss, pinn_loss(bundle, p, act, ds));
            auto check = [&](double& entry, double analytic) {
                const double saved = entry;
                auto f = [&](double v) {
                    entry = v;
                    return pinn_loss(bundle, p, act, ds);
                };
                const double fd = testkit::central_diff(f, saved, 1e-6);
                entry = saved;
                worst = std::max(worst, rel_err(analytic, fd, 1e-4));
            };
            for (Eigen::Index i = 0; i < p.W1.size(); ++i) check(p.W1.data()[i], g.grad.W1.data()[i]);
            for (Eigen::Index i = 0; i < p.b1.size(); ++i) check(p.b1(i), g.grad.b1(i));
            for (Eigen::Index i = 0; i < p.W2.size(); ++i) check(p.W2.data()[i], g.grad.W2.data()[i]);
            for (Eigen::Index i = 0; i < p.b2.size(); ++i) check(p.b2(i), g.grad.b2(i));
            for (Eigen::Index i = 0; i < p.W3.size(); ++i) check(p.W3(i), g.grad.W3(i));
            check(p.b3, g.grad.b3);
        }
    }
    EXPECT_LE(worst, 1e-5);
}

TEST(Pinn, LossInvariantUnderColumnPermutation) {
    const PdeProblem prob = manufactured_problem("elliptic2d");
    const Dataset ds = testkit::toy_dataset(prob, 12);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(15);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix X(2, 12);
    for (int n = 0; n < 12; ++n) X.col(n) = ds.X.col(perm[n]);
    const Dataset shuffled = make_dataset(prob, X);
    const NetworkParams p = testkit::random_params(5, 2, rng);
    EXPECT_LE(rel_err(pinn_loss(prob, p, make_sin_activation(), ds),
                      pinn_loss(prob, p, make_sin_activation(), shuffled)),
              1e-13);
}

TEST(Pinn, ZeroRateKeepsLossConstant) {
    const PdeProblem prob = manufactured_problem("elliptic2d");
    const Dataset ds = testkit::toy_dataset(prob, 20);
    std::mt19937_64 rng(16);
    const NetworkParams p = testkit::random_params(5, 2, rng, 0.4);
    const PinnTrainResult r = train_pinn_gd(prob, p, make_sin_activation(), ds, 5, {0.0, 1.0});
    ASSERT_EQ(r.losses.size(), 6u);
    for (double J : r.losses) EXPECT_EQ(J, r.losses.front());
}

TEST(Pinn, GradientDescentDecreasesOnOneDimensionalToy) {
    PdeProblem prob;
    prob.kind = ProblemKind::Elliptic;
    prob.dim = 1;
    prob.coeff_c = [](const Vector& x) { return 1.0 + 0.5 * x(0) * x(0); };
    prob.grad_c = [](const Vector& x) { return Vector(Vector::Constant(1, x(0))); };
    prob.source = [](double, const Vector& x) { return std::cos(2.0 * x(0)); };
    const Dataset ds = testkit::toy_dataset(prob, 20);
    std::mt19937_64 rng(17);
    const NetworkParams p = testkit::random_params(5, 1, rng, 1.0 / std::sqrt(5.0));
    const PinnTrainResult r = train_pinn_gd(prob, p, make_sin_activation(), ds, 500, {1e-3, 1.0});
    ASSERT_FALSE(r.diverged);
    for (int k = 1; k <= 10; ++k) EXPECT_LT(r.losses[k], r.losses[k - 1]);
    EXPECT_LT(r.losses.back(), r.losses.front());
}

TEST(Pinn, DivergenceGuardStopsRun) {
    const PdeProblem prob = manufactured_problem("elliptic2d");
    const Dataset ds = testkit::toy_dataset(prob, 50);
    std::mt19937_64 rng(18);
    const NetworkParams p = testkit::random_params(10, 2, rng, 1.0);
    const PinnTrainResult r = train_pinn_gd(prob, p, make_sin_activation(), ds, 50, {10.0, 1.0});
    EXPECT_TRUE(r.diverged);
    EXPECT_GE(r.failed_iteration, 1);
    EXPECT_FALSE(r.message.empty());
}

TEST(Pinn, ScheduleIsExponential) {
    const LearningRateSchedule s{2e-3, 0.5};
    EXPECT_DOUBLE_EQ(s.at(0), 2e-3);
    EXPECT_DOUBLE_EQ(s.at(3), 2.5e-4);
}
