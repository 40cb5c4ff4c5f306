#include "stprobe/trf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stprobe/error.hpp"

namespace stprobe {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

bool in_bounds(const VectorXd& x, const VectorXd& lb, const VectorXd& ub) {
    return (x.array() >= lb.array()).all() && (x.array() <= ub.array()).all();
}

// Coleman-Li scaling vector v and its derivative dv.
void cl_scaling(const VectorXd& x, const VectorXd& g, const VectorXd& lb, const VectorXd& ub, VectorXd& v,
                VectorXd& dv) {
    const auto n = x.size();
    v = VectorXd::Ones(n);
    dv = VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (g[i] < 0.0 && std::isfinite(ub[i])) {
            v[i] = ub[i] - x[i];
            dv[i] = -1.0;
        }
        if (g[i] > 0.0 && std::isfinite(lb[i])) {
            v[i] = x[i] - lb[i];
            dv[i] = 1.0;
        }
    }
}

VectorXd make_strictly_feasible(const VectorXd& x, const VectorXd& lb, const VectorXd& ub) {
    VectorXd out = x;
    const VectorXi active = find_active_constraints(x, lb, ub, 0.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (active[i] == -1) {
            out[i] = std::nextafter(lb[i], ub[i]);
        } else if (active[i] == 1) {
            out[i] = std::nextafter(ub[i], lb[i]);
        }
        if (out[i] < lb[i] || out[i] > ub[i]) {
            out[i] = 0.5 * (lb[i] + ub[i]);
        }
    }
    return out;
}

// Smallest positive multiple t of s with x + t s on a bound; hits marks the
// components that reach it (signed by the step direction).
double step_to_bound(const VectorXd& x, const VectorXd& s, const VectorXd& lb, const VectorXd& ub, VectorXi* hits) {
    const auto n = x.size();
    VectorXd steps = VectorXd::Constant(n, kInf);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (s[i] != 0.0) {
            steps[i] = std::max((lb[i] - x[i]) / s[i], (ub[i] - x[i]) / s[i]);
        }
    }
    const double m = steps.minCoeff();
    if (hits) {
        *hits = VectorXi::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (steps[i] == m) {
                (*hits)[i] = s[i] > 0.0 ? 1 : (s[i] < 0.0 ? -1 : 0);
            }
        }
    }
    return m;
}

// Both intersections of x + t s with the sphere |.| = delta.
std::pair<double, double> intersect_trust_region(const VectorXd& x, const VectorXd& s, double delta) {
    const double a = s.squaredNorm();
    if (a == 0.0) {
        throw Error("trust-region intersection with a zero step");
    }
    const double b = x.dot(s);
    const double c = x.squaredNorm() - delta * delta;
    if (c > 0.0) {
        throw Error("point lies outside the trust region");
    }
    const double d = std::sqrt(b * b - a * c);
    const double q = -(b + std::copysign(d, b));
    double t1 = q / a;
    double t2 = c / q;
    if (t1 > t2) {
        std::swap(t1, t2);
    }
    return {t1, t2};
}

double evaluate_quadratic(const MatrixXd& J, const VectorXd& g, const VectorXd& s, const VectorXd& diag) {
    const VectorXd js = J * s;
    const double q = js.squaredNorm() + s.dot(diag.cwiseProduct(s));
    return 0.5 * q + s.dot(g);
}

struct Quad1d {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

// Coefficients of t -> f(s0 + t s) for the model quadratic.
Quad1d build_quadratic_1d(const MatrixXd& J, const VectorXd& g, const VectorXd& s, const VectorXd& diag,
                          const VectorXd* s0) {
    const VectorXd v = J * s;
    Quad1d q;
    q.a = 0.5 * (v.squaredNorm() + s.dot(diag.cwiseProduct(s)));
    q.b = g.dot(s);
    if (s0) {
        const VectorXd u = J * *s0;
        q.b += u.dot(v) + s0->dot(diag.cwiseProduct(s));
        q.c = 0.5 * u.squaredNorm() + g.dot(*s0) + 0.5 * s0->dot(diag.cwiseProduct(*s0));
    }
    return q;
}

std::pair<double, double> minimize_quadratic_1d(const Quad1d& q, double lo, double hi) {
    double ts[3] = {lo, hi, 0.0};
    int n = 2;
    if (q.a != 0.0) {
        const double ext = -0.5 * q.b / q.a;
        if (lo < ext && ext < hi) {
            ts[n++] = ext;
        }
    }
    double best_t = ts[0];
    double best_y = kInf;
    for (int i = 0; i < n; ++i) {
        const double y = ts[i] * (q.a * ts[i] + q.b) + q.c;
        if (y < best_y) {
            best_y = y;
            best_t = ts[i];
        }
    }
    return {best_t, best_y};
}

struct TrSolution {
    VectorXd p;
    double alpha = 0.0;
};

// Levenberg-Marquardt parameter search for min |J p + f| subject to |p| <= delta,
// given the SVD J = U diag(s) V^T and uf = U^T f.
TrSolution solve_lsq_trust_region(Eigen::Index n, Eigen::Index m, const VectorXd& uf, const VectorXd& s,
                                  const MatrixXd& V, double delta, double initial_alpha) {
    const VectorXd suf = s.cwiseProduct(uf);
    const auto phi_and_derivative = [&](double alpha) {
        const VectorXd denom = s.array().square() + alpha;
        const double p_norm = suf.cwiseQuotient(denom).norm();
        const double phi = p_norm - delta;
        const double phi_prime = -(suf.array().square() / denom.array().cube()).sum() / p_norm;
        return std::pair<double, double>{phi, phi_prime};
    };

    bool full_rank = false;
    if (m >= n) {
        const double threshold = kEps * static_cast<double>(m) * s[0];
        full_rank = s[n - 1] > threshold;
    }
    if (full_rank) {
        const VectorXd p = -V * uf.cwiseQuotient(s);
        if (p.norm() <= delta) {
            return {p, 0.0};
        }
    }
    double alpha_upper = suf.norm() / delta;
    double alpha_lower = 0.0;
    if (full_rank) {
        const auto [phi, phi_prime] = phi_and_derivative(0.0);
        alpha_lower = -phi / phi_prime;
    }
    double alpha;
    if (!full_rank && initial_alpha == 0.0) {
        alpha = std::max(0.001 * alpha_upper, std::sqrt(alpha_lower * alpha_upper));
    } else {
        alpha = initial_alpha;
    }
    for (int it = 0; it < 10; ++it) {
        if (alpha < alpha_lower || alpha > alpha_upper) {
            alpha = std::max(0.001 * alpha_upper, std::sqrt(alpha_lower * alpha_upper));
        }
        const auto [phi, phi_prime] = phi_and_derivative(alpha);
        if (phi < 0.0) {
            alpha_upper = alpha;
        }
        const double ratio = phi / phi_prime;
        alpha_lower = std::max(alpha_lower, alpha - ratio);
        alpha -= (phi + delta) * ratio / delta;
        if (std::abs(phi) < 0.01 * delta) {
            break;
        }
    }
    const VectorXd denom = s.array().square() + alpha;
    VectorXd p = -V * suf.cwiseQuotient(denom);
    p *= delta / p.norm();
    return {p, alpha};
}

struct Step {
    VectorXd step;
    VectorXd step_h;
    double predicted_reduction = 0.0;
};

Step select_step(const VectorXd& x, const MatrixXd& J_h, const VectorXd& diag_h, const VectorXd& g_h, VectorXd p,
                 VectorXd p_h, const VectorXd& d, double delta, const VectorXd& lb, const VectorXd& ub,
                 double theta) {
    if (in_bounds(x + p, lb, ub)) {
        const double value = evaluate_quadratic(J_h, g_h, p_h, diag_h);
        return {p, p_h, -value};
    }
    VectorXi hits;
    const double p_stride = step_to_bound(x, p, lb, ub, &hits);

    // Reflected direction.
    VectorXd r_h = p_h;
    for (Eigen::Index i = 0; i < hits.size(); ++i) {
        if (hits[i] != 0) {
            r_h[i] = -r_h[i];
        }
    }
    VectorXd r = d.cwiseProduct(r_h);

    p *= p_stride;
    p_h *= p_stride;
    const VectorXd x_on_bound = x + p;

    const double to_tr = intersect_trust_region(p_h, r_h, delta).second;
    const double to_bound = step_to_bound(x_on_bound, r, lb, ub, nullptr);
    const double r_stride = std::min(to_bound, to_tr);
    double r_lo;
    double r_hi;
    if (r_stride > 0.0) {
        r_lo = (1.0 - theta) * p_stride / r_stride;
        r_hi = r_stride == to_bound ? theta * to_bound : to_tr;
    } else {
        r_lo = 0.0;
        r_hi = -1.0;
    }
    double r_value = kInf;
    if (r_lo <= r_hi) {
        const Quad1d q = build_quadratic_1d(J_h, g_h, r_h, diag_h, &p_h);
        const auto [t, val] = minimize_quadratic_1d(q, r_lo, r_hi);
        r_h = p_h + t * r_h;
        r = d.cwiseProduct(r_h);
        r_value = val;
    }

    // Step back from the bound.
    p *= theta;
    p_h *= theta;
    const double p_value = evaluate_quadratic(J_h, g_h, p_h, diag_h);

    // Anti-gradient direction.
    VectorXd ag_h = -g_h;
    VectorXd ag = d.cwiseProduct(ag_h);
    const double ag_to_tr = delta / ag_h.norm();
    const double ag_to_bound = step_to_bound(x, ag, lb, ub, nullptr);
    const double ag_max = ag_to_bound < ag_to_tr ? theta * ag_to_bound : ag_to_tr;
    const Quad1d qa = build_quadratic_1d(J_h, g_h, ag_h, diag_h, nullptr);
    const auto [ag_stride, ag_value] = minimize_quadratic_1d(qa, 0.0, ag_max);
    ag_h *= ag_stride;
    ag *= ag_stride;

    if (p_value < r_value && p_value < ag_value) {
        return {p, p_h, -p_value};
    }
    if (r_value < p_value && r_value < ag_value) {
        return {r, r_h, -r_value};
    }
    return {ag, ag_h, -ag_value};
}

void jac_scale(const MatrixXd& J, VectorXd& scale, VectorXd& scale_inv, bool first) {
    VectorXd norms = J.colwise().norm().transpose();
    if (first) {
        for (Eigen::Index i = 0; i < norms.size(); ++i) {
            if (norms[i] == 0.0) {
                norms[i] = 1.0;
            }
        }
        scale_inv = norms;
    } else {
        scale_inv = scale_inv.cwiseMax(norms);
    }
    scale = scale_inv.cwiseInverse();
}

}  // namespace

VectorXi find_active_constraints(const VectorXd& x, const VectorXd& lb, const VectorXd& ub, double rtol) {
    VectorXi active = VectorXi::Zero(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (rtol == 0.0) {
            if (x[i] <= lb[i]) {
                active[i] = -1;
            } else if (x[i] >= ub[i]) {
                active[i] = 1;
            }
            continue;
        }
        const double lower_dist = x[i] - lb[i];
        const double upper_dist = ub[i] - x[i];
        const double lower_thr = rtol * std::max(1.0, std::abs(lb[i]));
        const double upper_thr = rtol * std::max(1.0, std::abs(ub[i]));
        if (std::isfinite(lb[i]) && lower_dist <= std::min(upper_dist, lower_thr)) {
            active[i] = -1;
        }
        if (std::isfinite(ub[i]) && upper_dist <= std::min(lower_dist, upper_thr)) {
            active[i] = 1;
        }
    }
    return active;
}

TrfResult trf_solve(const ResidualFn& fun, const JacobianFn& jac, VectorXd x0, const VectorXd& lb, const VectorXd& ub,
                    const TrfOptions& opt) {
    const Eigen::Index n = x0.size();
    if (lb.size() != n || ub.size() != n) {
        throw InvalidArgument("bound vectors must match the parameter count");
    }
    if ((lb.array() >= ub.array()).any()) {
        throw InvalidArgument("each lower bound must be below its upper bound");
    }
    VectorXd x = make_strictly_feasible(x0.cwiseMax(lb).cwiseMin(ub), lb, ub);

    TrfResult res;
    VectorXd f;
    fun(x, f);
    int nfev = 1;
    const Eigen::Index m = f.size();
    if (!f.allFinite()) {
        throw Error("residuals are not finite at the initial point");
    }
    MatrixXd J(m, n);
    jac(x, f, J);
    double cost = 0.5 * f.squaredNorm();
    VectorXd g = J.transpose() * f;
    res.cost_history.push_back(cost);

    VectorXd scale;
    VectorXd scale_inv;
    if (opt.jac_scaling) {
        jac_scale(J, scale, scale_inv, true);
    } else {
        scale = VectorXd::Ones(n);
        scale_inv = VectorXd::Ones(n);
    }

    VectorXd v;
    VectorXd dv;
    cl_scaling(x, g, lb, ub, v, dv);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (dv[i] != 0.0) {
            v[i] *= scale_inv[i];
        }
    }
    double delta = (x.cwiseProduct(scale_inv).array() / v.array().sqrt()).matrix().norm();
    if (delta == 0.0 || !std::isfinite(delta)) {
        delta = 1.0;
    }

    double alpha = 0.0;
    int status = -1;
    int iteration = 0;
    MatrixXd J_aug(m + n, n);
    VectorXd f_aug = VectorXd::Zero(m + n);

    while (true) {
        cl_scaling(x, g, lb, ub, v, dv);
        const double g_norm = g.cwiseProduct(v).lpNorm<Eigen::Infinity>();
        if (g_norm < opt.gtol) {
            status = 1;
        }
        if (status != -1 || nfev >= opt.max_evaluations || iteration >= opt.max_iterations) {
            break;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (dv[i] != 0.0) {
                v[i] *= scale_inv[i];
            }
        }
        const VectorXd d = v.array().sqrt().matrix().cwiseProduct(scale);
        const VectorXd diag_h = g.cwiseProduct(dv).cwiseProduct(scale);
        const VectorXd g_h = d.cwiseProduct(g);

        f_aug.head(m) = f;
        J_aug.topRows(m) = J * d.asDiagonal();
        J_aug.bottomRows(n) = diag_h.cwiseSqrt().asDiagonal();
        const MatrixXd J_h = J_aug.topRows(m);
        Eigen::BDCSVD<MatrixXd> svd(J_aug, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const VectorXd s = svd.singularValues();
        const MatrixXd& V = svd.matrixV();
        const VectorXd uf = svd.matrixU().transpose() * f_aug;

        const double theta = std::max(0.995, 1.0 - g_norm);
        double actual_reduction = -1.0;
        VectorXd x_new;
        VectorXd f_new;
        double cost_new = cost;
        while (actual_reduction <= 0.0 && nfev < opt.max_evaluations) {
            const TrSolution tr = solve_lsq_trust_region(n, m + n, uf, s, V, delta, alpha);
            alpha = tr.alpha;
            const VectorXd p = d.cwiseProduct(tr.p);
            const Step st = select_step(x, J_h, diag_h, g_h, p, tr.p, d, delta, lb, ub, theta);
            x_new = make_strictly_feasible(x + st.step, lb, ub);
            fun(x_new, f_new);
            ++nfev;
            const double step_h_norm = st.step_h.norm();
            if (!f_new.allFinite()) {
                delta = 0.25 * step_h_norm;
                continue;
            }
            cost_new = 0.5 * f_new.squaredNorm();
            actual_reduction = cost - cost_new;

            double ratio;
            const double predicted = st.predicted_reduction;
            if (predicted > 0.0) {
                ratio = actual_reduction / predicted;
            } else if (predicted == 0.0 && actual_reduction == 0.0) {
                ratio = 1.0;
            } else {
                ratio = 0.0;
            }
            double delta_new = delta;
            if (ratio < 0.25) {
                delta_new = 0.25 * step_h_norm;
            } else if (ratio > 0.75 && step_h_norm > 0.95 * delta) {
                delta_new = 2.0 * delta;
            }

            const double step_norm = st.step.norm();
            const bool ftol_ok = actual_reduction < opt.ftol * cost && ratio > 0.25;
            const bool xtol_ok = step_norm < opt.xtol * (opt.xtol + x.norm());
            if (ftol_ok && xtol_ok) {
                status = 4;
            } else if (ftol_ok) {
                status = 2;
            } else if (xtol_ok) {
                status = 3;
            }
            if (status != -1) {
                break;
            }
            alpha *= delta / delta_new;
            delta = delta_new;
        }

        if (actual_reduction > 0.0) {
            x = x_new;
            f = f_new;
            cost = cost_new;
            jac(x, f, J);
            g = J.transpose() * f;
            if (opt.jac_scaling) {
                jac_scale(J, scale, scale_inv, false);
            }
            res.cost_history.push_back(cost);
        }
        ++iteration;
    }

    res.x = x;
    res.residuals = f;
    res.cost = cost;
    res.iterations = iteration;
    res.evaluations = nfev;
    res.status = status == -1 ? 0 : status;
    res.active = find_active_constraints(x, lb, ub, opt.xtol);
    return res;
}

}  // namespace stprobe
