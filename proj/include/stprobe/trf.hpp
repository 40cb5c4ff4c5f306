#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace stprobe {

/// Bounded nonlinear least squares by the trust-region-reflective method
/// (Coleman-Li scaling, reflected and anti-gradient step candidates, exact
/// trust-region subproblem through an SVD of the augmented Jacobian).
struct TrfOptions {
    double ftol = 1e-10;
    double xtol = 1e-10;
    double gtol = 0.0;
    int max_iterations = 500;
    int max_evaluations = 10000;
    bool jac_scaling = true;  // x_scale = 'jac'
};

struct TrfResult {
    Eigen::VectorXd x;
    Eigen::VectorXd residuals;
    double cost = 0.0;  // 0.5 * |f|^2
    int iterations = 0;
    int evaluations = 0;
    /// 0 iteration/evaluation cap, 1 gtol, 2 ftol, 3 xtol, 4 ftol and xtol.
    int status = 0;
    std::vector<double> cost_history;  // cost after each accepted step, starting with the initial cost
    Eigen::VectorXi active;            // -1 lower, 1 upper, 0 free

    bool converged() const { return status > 0; }
};

using ResidualFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& f)>;
using JacobianFn = std::function<void(const Eigen::VectorXd& x, const Eigen::VectorXd& f, Eigen::MatrixXd& J)>;

/// lb/ub may hold +-infinity. x0 is moved strictly inside the bounds first.
TrfResult trf_solve(const ResidualFn& fun, const JacobianFn& jac, Eigen::VectorXd x0, const Eigen::VectorXd& lb,
                    const Eigen::VectorXd& ub, const TrfOptions& opt = {});

/// -1 / 1 where x sits within rtol of the lower / upper bound.
Eigen::VectorXi find_active_constraints(const Eigen::VectorXd& x, const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                                        double rtol);

}  // namespace stprobe
