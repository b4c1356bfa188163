#include <gtest/gtest.h>

#include "support.hpp"

using namespace lysep;

namespace {

PdeProblem constant_coeff(ProblemKind kind, int d) {
    PdeProblem p;
    p.name = "unit";
    p.kind = kind;
    p.dim = d;
    p.coeff_c = [](const Vector&) { return 1.0; };
    p.grad_c = [](const Vector& x) { return Vector(Vector::Zero(x.size())); };
    p.source = [](double, const Vector&) { return 0.0; };
    return p;
}

}  // namespace

TEST(Problems, EllipticCoefficientsByHand) {
    PdeProblem p = constant_coeff(ProblemKind::Elliptic, 2);
    p.coeff_c = [](const Vector& x) { return x.squaredNorm(); };
    p.grad_c = [](const Vector& x) { return Vector(2.0 * x); };
    Matrix X(2, 1);
    X << 0.5, 0.5;
    const CoeffBundle b = coeff_bundle(p, make_dataset(p, X));
    EXPECT_DOUBLE_EQ(b.K(0), 4.0);
    EXPECT_DOUBLE_EQ(b.K_i[0](0), 0.5);
    EXPECT_DOUBLE_EQ(b.K_i[1](0), 0.5);
    EXPECT_DOUBLE_EQ(b.K_hat(0), -0.25);
}

TEST(Problems, ConstantCoefficientSpecializations) {
    for (int d : {1, 2, 5}) {
        const PdeProblem e = constant_coeff(ProblemKind::Elliptic, d);
        const CoeffBundle be = coeff_bundle(e, make_dataset(e, Matrix::Zero(d, 1)));
        EXPECT_DOUBLE_EQ(be.K(0), 2.0 * d);
        for (const RowVector& k : be.K_i) EXPECT_EQ(k(0), 0.0);
        EXPECT_DOUBLE_EQ(be.K_hat(0), -1.0);

        const PdeProblem pp = constant_coeff(ProblemKind::Parabolic, d);
        Matrix X = Matrix::Zero(d + 1, 1);
        X(0, 0) = 1.0;
        const CoeffBundle bp = coeff_bundle(pp, make_dataset(pp, X));
        EXPECT_DOUBLE_EQ(bp.K(0), -1.0 - 2.0 * d);
        ASSERT_TRUE(bp.K_0.has_value());
        EXPECT_DOUBLE_EQ((*bp.K_0)(0), -1.0);
        EXPECT_DOUBLE_EQ(bp.K_hat(0), -1.0);
    }
}

TEST(Problems, InfNormsMatchRows) {
    for (ProblemKind kind : testkit::kAllKinds) {
        const PdeProblem p = testkit::toy_problem(kind, 3);
        const CoeffBundle b = coeff_bundle(p, testkit::toy_dataset(p, 9));
        EXPECT_EQ(b.K.size(), 9);
        EXPECT_EQ(b.inf_norms.K, b.K.cwiseAbs().maxCoeff());
        for (const DerivativeSlot& s : b.slots) {
            EXPECT_EQ(s.first.size(), 9);
            EXPECT_EQ(s.first_inf, s.first.cwiseAbs().maxCoeff());
            if (s.has_second()) {
                EXPECT_EQ(s.second_inf, s.second->cwiseAbs().maxCoeff());
            }
        }
    }
}

TEST(Problems, AnsatzVanishesOnBoundaryAndInitialSlice) {
    const PdeProblem e = constant_coeff(ProblemKind::Elliptic, 2);
    Matrix X(2, 3);
    X << 1.0, 0.0, 0.6, 0.0, -1.0, 0.8;
    const RowVector phi = RowVector::Constant(3, 1.7);
    EXPECT_LT(ansatz_value(e, phi, make_dataset(e, X)).cwiseAbs().maxCoeff(), 1e-15);

    Matrix origin = Matrix::Zero(2, 1);
    EXPECT_DOUBLE_EQ(ansatz_value(e, RowVector::Constant(1, 3.0), make_dataset(e, origin))(0), -3.0);

    for (ProblemKind kind : {ProblemKind::Parabolic, ProblemKind::Hyperbolic}) {
        const PdeProblem p = constant_coeff(kind, 2);
        Matrix T(3, 2);
        T << 0.0, 0.0, 0.1, 0.2, -0.3, 0.4;
        EXPECT_EQ(ansatz_value(p, RowVector::Constant(2, 4.0), make_dataset(p, T)).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Problems, BenchmarkSolutionsSatisfyBoundaryData) {
    const PdeProblem e = manufactured_problem("elliptic2d");
    for (double th : {0.0, 0.7, 2.0, 4.5}) {
        Vector x(2);
        x << std::cos(th), std::sin(th);
        EXPECT_NEAR((*e.true_solution)(0.0, x), 0.0, 1e-15);
    }
    for (const char* name : {"parabolic5d", "hyperbolic5d"}) {
        const PdeProblem p = manufactured_problem(name);
        std::mt19937_64 rng(3);
        const Vector x = testkit::random_matrix(5, 1, rng, 0.4);
        EXPECT_EQ((*p.true_solution)(0.0, x), 0.0) << name;
    }
}

TEST(Problems, SourcesMatchFiniteDifferenceOperator) {
    for (const char* name : {"elliptic2d", "elliptic10d", "parabolic5d", "hyperbolic5d"}) {
        EXPECT_LE(testkit::max_source_error(manufactured_problem(name), 100), 1e-5) << name;
    }
    for (ProblemKind kind : testkit::kAllKinds) EXPECT_LE(testkit::max_source_error(testkit::toy_problem(kind, 2), 100), 1e-5);
}

TEST(Problems, Elliptic2dSourceAtFixedPoint) {
    const PdeProblem p = manufactured_problem("elliptic2d");
    Vector x(2);
    x << 0.3, 0.4;
    EXPECT_LE(testkit::rel_err(p.source(0.0, x), testkit::fd_source(p, 0.0, x)), 1e-5);
}

TEST(Problems, CoefficientGradientsMatchFiniteDifferences) {
    for (const char* name : {"elliptic2d", "elliptic10d", "parabolic5d"}) {
        const PdeProblem p = manufactured_problem(name);
        const Matrix pts = halton_ball(p.dim, 20, 0);
        for (Eigen::Index n = 0; n < pts.cols(); ++n) {
            const Vector x = pts.col(n);
            const Vector g = p.grad_c(x);
            for (int i = 0; i < p.dim; ++i) {
                auto f = [&](double v) {
                    Vector y = x;
                    y(i) = v;
                    return p.coeff_c(y);
                };
                EXPECT_LE(testkit::rel_err(g(i), testkit::central_diff(f, x(i), 1e-5), 1e-3), 1e-6) << name;
            }
        }
    }
}

TEST(Problems, DatasetValidation) {
    const PdeProblem e = manufactured_problem("elliptic2d");
    Matrix bad(2, 1);
    bad << 0.9, 0.9;
    EXPECT_THROW(make_dataset(e, bad), std::invalid_argument);
    EXPECT_THROW(make_dataset(e, Matrix::Zero(3, 2)), std::invalid_argument);
    // c = |x|^2 vanishes at the origin.
    EXPECT_THROW(make_dataset(e, Matrix::Zero(2, 1)), std::invalid_argument);
    const PdeProblem p = manufactured_problem("parabolic5d");
    Matrix late = Matrix::Zero(6, 1);
    late(0, 0) = 1.5;
    EXPECT_THROW(make_dataset(p, late), std::invalid_argument);
    EXPECT_THROW(manufactured_problem("poisson3d"), std::invalid_argument);
}

TEST(Problems, DatasetDerivedRows) {
    const PdeProblem p = manufactured_problem("hyperbolic5d");
    const Dataset ds = testkit::toy_dataset(p, 12);
    for (Eigen::Index n = 0; n < ds.size(); ++n) {
        EXPECT_NEAR(ds.X_hat(n), ds.X.col(n).tail(5).squaredNorm(), 1e-12);
        EXPECT_EQ(ds.T0(n), ds.X(0, n));
        EXPECT_GE(ds.T0(n), 0.0);
        EXPECT_LE(ds.T0(n), 1.0);
    }
}
