#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "stprobe/trf.hpp"

using namespace stprobe;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rosenbrock as residuals (10 (x1 - x0^2), 1 - x0).
void rosen(const VectorXd& x, VectorXd& f) {
    f.resize(2);
    f << 10 * (x[1] - x[0] * x[0]), 1 - x[0];
}
void rosen_jac(const VectorXd& x, const VectorXd&, MatrixXd& J) {
    J.resize(2, 2);
    J << -20 * x[0], 10, -1, 0;
}

}  // namespace

TEST_CASE("unbounded Rosenbrock") {
    VectorXd x0(2);
    x0 << -1.2, 1.0;
    const VectorXd lb = VectorXd::Constant(2, -kInf);
    const VectorXd ub = VectorXd::Constant(2, kInf);
    const auto r = trf_solve(rosen, rosen_jac, x0, lb, ub);
    CHECK(r.converged());
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.cost < 1e-12);
    for (std::size_t i = 1; i < r.cost_history.size(); ++i) {
        CHECK(r.cost_history[i] <= r.cost_history[i - 1]);
    }
}

TEST_CASE("Rosenbrock with an active upper bound") {
    // Optimum on x1 <= 0.5 with x0 free: x0^2 near 0.5 trade-off; the
    // bound must be active and the solution feasible.
    VectorXd x0(2);
    x0 << 0.0, 0.0;
    VectorXd lb(2), ub(2);
    lb << -kInf, -kInf;
    ub << kInf, 0.5;
    const auto r = trf_solve(rosen, rosen_jac, x0, lb, ub);
    CHECK(r.converged());
    CHECK(r.x[1] <= 0.5);
    CHECK(r.x[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r.active[1] == 1);
    CHECK(r.active[0] == 0);
    // Stationary in x0 along the bound: d/dx0 [100 (0.5 - x0^2)^2 + (1 - x0)^2] = 0.
    const double x = r.x[0];
    CHECK(std::abs(-400 * x * (0.5 - x * x) - 2 * (1 - x)) < 1e-5);
}

TEST_CASE("bounded linear least squares") {
    // min |A x - y|^2 with 0 <= x <= 1; unconstrained optimum (2, -1).
    MatrixXd A(3, 2);
    A << 1, 0, 0, 1, 1, 1;
    VectorXd y(3);
    y << 2, -1, 1;
    auto fun = [&](const VectorXd& x, VectorXd& f) { f = A * x - y; };
    auto jac = [&](const VectorXd&, const VectorXd&, MatrixXd& J) { J = A; };
    VectorXd lb = VectorXd::Zero(2), ub = VectorXd::Ones(2);
    const auto r = trf_solve(fun, jac, VectorXd::Constant(2, 0.5), lb, ub);
    CHECK(r.converged());
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(r.x[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
    CHECK(r.active[0] == 1);
    CHECK(r.active[1] == -1);
}

TEST_CASE("starting points are moved inside the bounds") {
    auto fun = [](const VectorXd& x, VectorXd& f) { f = x; };
    auto jac = [](const VectorXd& x, const VectorXd&, MatrixXd& J) { J = MatrixXd::Identity(x.size(), x.size()); };
    VectorXd lb = VectorXd::Constant(1, 1.0), ub = VectorXd::Constant(1, 2.0);
    const auto r = trf_solve(fun, jac, VectorXd::Constant(1, 5.0), lb, ub);
    CHECK(r.x[0] == doctest::Approx(1.0));
    CHECK(r.active[0] == -1);
}

TEST_CASE("iteration cap reports non-convergence") {
    VectorXd x0(2);
    x0 << -1.2, 1.0;
    const auto r = trf_solve(rosen, rosen_jac, x0, VectorXd::Constant(2, -kInf), VectorXd::Constant(2, kInf),
                             {.max_iterations = 2});
    CHECK_FALSE(r.converged());
    CHECK(r.status == 0);
}

TEST_CASE("active constraint detection") {
    VectorXd x(3), lb(3), ub(3);
    x << 0.0, 0.5, 1.0;
    lb << 0, 0, 0;
    ub << 1, 1, 1;
    const auto a = find_active_constraints(x, lb, ub, 1e-10);
    CHECK(a[0] == -1);
    CHECK(a[1] == 0);
    CHECK(a[2] == 1);
}
