#include "stprobe/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "stprobe/error.hpp"

namespace stprobe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Spatial envelope sampled on the rows y >= 0 of a centred grid. Every
// envelope-weighted sum needed by the model is either even or odd under
// (x, y) -> (-x, -y), so the lower half plane follows by conjugation.
class HalfPlaneEnvelope {
public:
    struct Sums {
        double S = 0.0;    // sum w cos(2 pi q.x)
        double Gx = 0.0;   // sum w x sin(2 pi q.x)
        double Gy = 0.0;   // sum w y sin(2 pi q.x)
        double Cxx = 0.0;  // sum w xr^2 cos(2 pi q.x)
        double Cyy = 0.0;
        double Cxy = 0.0;
    };
    using Freq = std::array<double, 2>;

    HalfPlaneEnvelope(const GaborParams& g, const Extent& e, bool derivatives)
        : w_(e.width), hw_((e.width - 1) / 2), rows_((e.height - 1) / 2 + 1), arrays_(derivatives ? 6 : 1) {
        const double c = std::cos(g.theta0);
        const double s = std::sin(g.theta0);
        const double ax = 1.0 / (g.sigma_x * g.sigma_x);
        const double ay = 1.0 / (g.sigma_y * g.sigma_y);
        // Row y * arrays + k holds array k of image row y.
        data_.resize(rows_ * arrays_, w_);
        for (int y = 0; y < rows_; ++y) {
            for (int ix = 0; ix < w_; ++ix) {
                const double x = ix - hw_;
                const double xr = x * c + y * s;
                const double yr = -x * s + y * c;
                const double w = std::exp(-(xr * xr * ax + yr * yr * ay));
                const int r = y * arrays_;
                data_(r, ix) = w;
                if (arrays_ > 1) {
                    data_(r + 1, ix) = w * xr * xr;
                    data_(r + 2, ix) = w * yr * yr;
                    data_(r + 3, ix) = w * xr * yr;
                    data_(r + 4, ix) = w * x;
                    data_(r + 5, ix) = w * y;
                }
            }
        }
    }

    /// Sums for a batch of frequencies; the x contraction is one matrix product.
    std::vector<Sums> sums(const std::vector<Freq>& qs) const {
        const auto n = static_cast<Eigen::Index>(qs.size());
        MatrixXd cs(w_, 2 * n);
        for (Eigen::Index j = 0; j < n; ++j) {
            for (int ix = 0; ix < w_; ++ix) {
                const double a = kTwoPi * qs[static_cast<std::size_t>(j)][0] * (ix - hw_);
                cs(ix, j) = std::cos(a);
                cs(ix, n + j) = std::sin(a);
            }
        }
        const MatrixXd prod = data_ * cs;
        std::vector<Sums> out(qs.size());
        for (Eigen::Index j = 0; j < n; ++j) {
            const double qy = qs[static_cast<std::size_t>(j)][1];
            auto& o = out[static_cast<std::size_t>(j)];
            for (int y = 0; y < rows_; ++y) {
                const double b = kTwoPi * qy * y;
                const double f = y == 0 ? 1.0 : 2.0;
                const double cb = f * std::cos(b);
                const double sb = f * std::sin(b);
                const int r = y * arrays_;
                const auto re = [&](int k) { return prod(r + k, j); };
                const auto im = [&](int k) { return prod(r + k, n + j); };
                // Even arrays: Re(e^{ib} R); odd arrays: Im(e^{ib} R).
                o.S += cb * re(0) - sb * im(0);
                if (arrays_ > 1) {
                    o.Cxx += cb * re(1) - sb * im(1);
                    o.Cyy += cb * re(2) - sb * im(2);
                    o.Cxy += cb * re(3) - sb * im(3);
                    o.Gx += cb * im(4) + sb * re(4);
                    o.Gy += cb * im(5) + sb * re(5);
                }
            }
        }
        return out;
    }

private:
    int w_;
    int hw_;
    int rows_;
    int arrays_;
    MatrixXd data_;
};

// Envelope sums at k0 + k and k0 - k for each distinct (F, theta) among the
// stimuli; slot[i] indexes the pair used by stimulus i.
struct PairedSums {
    std::vector<HalfPlaneEnvelope::Sums> plus;
    std::vector<HalfPlaneEnvelope::Sums> minus;
    std::vector<std::size_t> slot;
};

PairedSums paired_sums(const HalfPlaneEnvelope& env, double k0x, double k0y, const std::vector<Stimulus>& stimuli) {
    std::map<std::pair<double, double>, std::size_t> index;
    std::vector<HalfPlaneEnvelope::Freq> qs;
    PairedSums out;
    out.slot.reserve(stimuli.size());
    for (const auto& st : stimuli) {
        auto [it, added] = index.emplace(std::make_pair(st.F, st.theta), index.size());
        if (added) {
            const double kx = st.F * std::cos(st.theta);
            const double ky = st.F * std::sin(st.theta);
            qs.push_back({k0x + kx, k0y + ky});
            qs.push_back({k0x - kx, k0y - ky});
        }
        out.slot.push_back(it->second);
    }
    const auto all = env.sums(qs);
    for (std::size_t j = 0; j < all.size(); j += 2) {
        out.plus.push_back(all[j]);
        out.minus.push_back(all[j + 1]);
    }
    return out;
}

// Derivatives of an envelope sum S with respect to (F0, theta0, sx, sy).
std::array<double, 4> spatial_derivatives(const HalfPlaneEnvelope::Sums& s, const GaborParams& g) {
    const double c0 = std::cos(g.theta0);
    const double s0 = std::sin(g.theta0);
    const double aniso = 1.0 / (g.sigma_x * g.sigma_x) - 1.0 / (g.sigma_y * g.sigma_y);
    std::array<double, 4> d{};
    d[0] = -kTwoPi * (s.Gx * c0 + s.Gy * s0);
    d[1] = -kTwoPi * g.F0 * (-s.Gx * s0 + s.Gy * c0) - 2.0 * aniso * s.Cxy;
    d[2] = 2.0 * s.Cxx / (g.sigma_x * g.sigma_x * g.sigma_x);
    d[3] = 2.0 * s.Cyy / (g.sigma_y * g.sigma_y * g.sigma_y);
    return d;
}

// The solver works on (F0^2, theta0, ft0, phi0, 1/sx^2, 1/sy^2, 1/st^2, K, b).
// The valley where a short carrier trades against envelope width is close to
// straight in these coordinates.
VectorXd to_solver(const GaborParams& g) {
    VectorXd z(kParamCount);
    z << g.F0 * g.F0, g.theta0, g.ft0, g.phi0, 1.0 / (g.sigma_x * g.sigma_x), 1.0 / (g.sigma_y * g.sigma_y),
        1.0 / (g.sigma_t * g.sigma_t), g.K, g.b;
    return z;
}

GaborParams from_solver(const VectorXd& z) {
    return GaborParams{std::sqrt(z[0]), z[1], z[2], z[3], 1.0 / std::sqrt(z[4]), 1.0 / std::sqrt(z[5]),
                       1.0 / std::sqrt(z[6]), z[7], z[8]};
}

bool same_value(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

struct ProfileData {
    std::vector<Stimulus> stimuli;
    VectorXd y;
    std::vector<int> curve_of;
};

// With the spatial parameters fixed the activation is linear in the frame
// amplitudes K w_t e^{i alpha_t} and in K b, up to the rectification. The
// separable problem is solved on the rows the data or the model mark active,
// and the amplitudes are mapped back onto (K, phi0, ft0, sigma_t, b).
struct SeparableSeed {
    double cost = kInf;
    GaborParams g;
};

class SeparableSolver {
public:
    SeparableSolver(const ProfileData& d, const Extent& e, double time_origin, const FitBounds& b)
        : d_(d), e_(e), origin_(time_origin), bounds_(b) {}

    SeparableSeed solve(double F0, double theta0, double sx, double sy) const {
        const GaborParams g = spatial(F0, theta0, sx, sy);
        MatrixXd X;
        design(g, X, nullptr);
        VectorXd coef;
        std::vector<Eigen::Index> rows;
        if (!fit_linear(X, coef, rows)) {
            return {};
        }
        SeparableSeed out;
        out.g = g;
        if (!map_temporal(coef, out.g)) {
            return {};
        }
        out.cost = ((X * coef).cwiseMax(0.0) - d_.y).squaredNorm();
        return out;
    }

    /// Residuals over z = (F0^2, theta0, 1/sx^2, 1/sy^2) with the amplitudes
    /// eliminated. J, when given, is the Kaufman approximation of the
    /// projected Jacobian. Returns false when the linear problem degenerates.
    bool projected(const VectorXd& z, VectorXd& r, MatrixXd* J) const {
        const GaborParams g = spatial(std::sqrt(z[0]), z[1], 1.0 / std::sqrt(z[2]), 1.0 / std::sqrt(z[3]));
        const auto m = static_cast<Eigen::Index>(d_.stimuli.size());
        MatrixXd X;
        std::array<MatrixXd, 4> dX;
        design(g, X, J ? &dX : nullptr);
        VectorXd coef;
        std::vector<Eigen::Index> rows;
        r = -d_.y;
        if (!fit_linear(X, coef, rows)) {
            if (J) {
                J->setZero(m, 4);
            }
            return false;
        }
        const auto n = static_cast<Eigen::Index>(rows.size());
        MatrixXd A(n, X.cols());
        for (Eigen::Index k = 0; k < n; ++k) {
            A.row(k) = X.row(rows[static_cast<std::size_t>(k)]);
            r[rows[static_cast<std::size_t>(k)]] += X.row(rows[static_cast<std::size_t>(k)]).dot(coef);
        }
        if (!J) {
            return true;
        }
        J->setZero(m, 4);
        const Eigen::HouseholderQR<MatrixXd> qr(A);
        const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, A.cols());
        const std::array<double, 4> chain = {0.5 / g.F0, 1.0, -0.5 * g.sigma_x * g.sigma_x * g.sigma_x,
                                             -0.5 * g.sigma_y * g.sigma_y * g.sigma_y};
        for (int p = 0; p < 4; ++p) {
            VectorXd v(n);
            for (Eigen::Index k = 0; k < n; ++k) {
                v[k] = dX[static_cast<std::size_t>(p)].row(rows[static_cast<std::size_t>(k)]).dot(coef);
            }
            v -= Q * (Q.transpose() * v);
            for (Eigen::Index k = 0; k < n; ++k) {
                (*J)(rows[static_cast<std::size_t>(k)], p) = chain[static_cast<std::size_t>(p)] * v[k];
            }
        }
        return true;
    }

private:
    static GaborParams spatial(double F0, double theta0, double sx, double sy) {
        GaborParams g;
        g.F0 = F0;
        g.theta0 = theta0;
        g.sigma_x = sx;
        g.sigma_y = sy;
        return g;
    }

    // Columns: per frame the real and imaginary amplitude terms, then bias.
    // dX holds the derivatives with respect to (F0, theta0, sx, sy).
    void design(const GaborParams& g, MatrixXd& X, std::array<MatrixXd, 4>* dX) const {
        HalfPlaneEnvelope env(g, e_, dX != nullptr);
        const double k0x = g.F0 * std::cos(g.theta0);
        const double k0y = g.F0 * std::sin(g.theta0);
        const int T = e_.frames;
        const auto m = static_cast<Eigen::Index>(d_.stimuli.size());
        X.resize(m, 2 * T + 1);
        if (dX) {
            for (auto& d : *dX) {
                d.setZero(m, 2 * T + 1);
            }
        }
        const PairedSums ps = paired_sums(env, k0x, k0y, d_.stimuli);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& st = d_.stimuli[static_cast<std::size_t>(i)];
            const std::size_t k = ps.slot[static_cast<std::size_t>(i)];
            const double sp = ps.plus[k].S;
            const double sm = ps.minus[k].S;
            std::array<double, 4> dp{};
            std::array<double, 4> dm{};
            if (dX) {
                dp = spatial_derivatives(ps.plus[k], g);
                dm = spatial_derivatives(ps.minus[k], g);
            }
            for (int t = 0; t < T; ++t) {
                const double beta = st.phi - kTwoPi * st.motion * (t - origin_);
                const double cb = std::cos(beta);
                const double sb = std::sin(beta);
                X(i, 2 * t) = 0.5 * (sp + sm) * cb;
                X(i, 2 * t + 1) = -0.5 * (sp - sm) * sb;
                if (dX) {
                    for (std::size_t p = 0; p < 4; ++p) {
                        (*dX)[p](i, 2 * t) = 0.5 * (dp[p] + dm[p]) * cb;
                        (*dX)[p](i, 2 * t + 1) = -0.5 * (dp[p] - dm[p]) * sb;
                    }
                }
            }
            X(i, 2 * T) = 1.0;
        }
    }

    // Least squares on the rows the data or the model mark active.
    bool fit_linear(const MatrixXd& X, VectorXd& coef, std::vector<Eigen::Index>& rows) const {
        const auto m = X.rows();
        std::vector<char> active(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i) {
            active[static_cast<std::size_t>(i)] = d_.y[i] > 0.0;
        }
        for (int pass = 0; pass < 3; ++pass) {
            rows.clear();
            for (Eigen::Index i = 0; i < m; ++i) {
                if (active[static_cast<std::size_t>(i)]) {
                    rows.push_back(i);
                }
            }
            if (rows.size() < static_cast<std::size_t>(X.cols())) {
                return false;
            }
            MatrixXd A(static_cast<Eigen::Index>(rows.size()), X.cols());
            VectorXd rhs(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t k = 0; k < rows.size(); ++k) {
                A.row(static_cast<Eigen::Index>(k)) = X.row(rows[k]);
                rhs[static_cast<Eigen::Index>(k)] = d_.y[rows[k]];
            }
            coef = A.colPivHouseholderQr().solve(rhs);
            const VectorXd pred = X * coef;
            bool changed = false;
            for (Eigen::Index i = 0; i < m; ++i) {
                const char a = d_.y[i] > 0.0 || pred[i] > 0.0;
                changed |= a != active[static_cast<std::size_t>(i)];
                active[static_cast<std::size_t>(i)] = a;
            }
            if (!changed) {
                break;
            }
        }
        return coef.allFinite();
    }

    // Frame amplitudes -> (K, sigma_t, phi0, ft0, b).
    bool map_temporal(const VectorXd& coef, GaborParams& g) const {
        const int T = e_.frames;
        std::vector<double> mag(static_cast<std::size_t>(T));
        std::vector<double> arg(static_cast<std::size_t>(T));
        std::vector<double> tc(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            const double re = coef[2 * t];
            const double im = coef[2 * t + 1];
            mag[static_cast<std::size_t>(t)] = std::hypot(re, im);
            arg[static_cast<std::size_t>(t)] = std::atan2(im, re);
            tc[static_cast<std::size_t>(t)] = t - origin_;
        }
        // log |A_t| = log K - tc^2 / sigma_t^2, fitted over the nonzero frames.
        double s1 = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int t = 0; t < T; ++t) {
            const auto u = static_cast<std::size_t>(t);
            if (!(mag[u] > 0.0)) {
                return false;
            }
            const double x = tc[u] * tc[u];
            const double y = std::log(mag[u]);
            s1 += 1;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double det = s1 * sxx - sx * sx;
        double slope = 0.0;
        double logK;
        if (det > 1e-12 * std::max(1.0, s1 * sxx)) {
            slope = (s1 * sxy - sx * sy) / det;
            logK = (sy - slope * sx) / s1;
        } else {
            // Frame weights are indistinguishable; keep the default width.
            slope = -1.0;
            logK = (sy + sx) / s1;
        }
        const double w_min = -1.0 / (bounds_.sigma_t_min * bounds_.sigma_t_min);
        const double w_max = -1.0 / (bounds_.sigma_t_max * bounds_.sigma_t_max);
        slope = std::clamp(slope, w_min, w_max);
        g.sigma_t = 1.0 / std::sqrt(-slope);
        g.K = std::exp(logK);

        // alpha_t = phi0 - 2 pi ft0 tc_t, unwrapped frame to frame.
        double dsum = 0.0;
        for (int t = 0; t + 1 < T; ++t) {
            dsum += wrap_pi(arg[static_cast<std::size_t>(t + 1)] - arg[static_cast<std::size_t>(t)]);
        }
        const double ft = T > 1 ? -dsum / (kTwoPi * (T - 1)) : 0.0;
        g.ft0 = std::clamp(ft, bounds_.ft_min, bounds_.ft_max);
        double cs = 0.0;
        double sn = 0.0;
        for (int t = 0; t < T; ++t) {
            const auto u = static_cast<std::size_t>(t);
            const double p = arg[u] + kTwoPi * g.ft0 * tc[u];
            cs += mag[u] * std::cos(p);
            sn += mag[u] * std::sin(p);
        }
        g.phi0 = std::atan2(sn, cs);
        g.b = coef[2 * T] / g.K;
        return std::isfinite(g.K) && g.K > 0.0 && std::isfinite(g.b);
    }

    const ProfileData& d_;
    Extent e_;
    double origin_;
    FitBounds bounds_;
};

// Coordinate grid search over the spatial parameters around the peak; returns
// the best seeds with distinct envelopes, lowest cost first.
std::vector<GaborParams> separable_seeds(const ProfileData& d, const PeakResponse& peak, const Extent& e,
                                         const FitOptions& opt, std::size_t count) {
    const SeparableSolver solver(d, e, opt.time_origin, opt.bounds);
    const auto& b = opt.bounds;
    std::vector<SeparableSeed> pool;
    const auto consider = [&](double F, double th, double sx, double sy) {
        F = std::clamp(F, b.F_min, b.F_max);
        sx = std::clamp(sx, b.sigma_xy_min, b.sigma_xy_max);
        sy = std::clamp(sy, b.sigma_xy_min, b.sigma_xy_max);
        SeparableSeed s = solver.solve(F, th, sx, sy);
        if (std::isfinite(s.cost)) {
            pool.push_back(s);
        }
        return s;
    };
    double F = peak.stimulus.F;
    double th = peak.stimulus.theta;
    double sx = 1.0 / (2.0 * F);
    double sy = sx;
    double best = kInf;
    const double s_hi = std::max(e.width, e.height);
    const auto sigma_pass = [&](double lo, double hi, int n) {
        const double cx = sx;
        const double cy = sy;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double ax = lo == hi ? cx : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1));
                const double ay = lo == hi ? cy : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * j / (n - 1));
                const auto s = consider(F, th, ax, ay);
                if (s.cost < best) {
                    best = s.cost;
                    sx = ax;
                    sy = ay;
                }
            }
        }
    };
    const auto spatial_pass = [&](double f_span, double th_span, int nf, int nt) {
        const double cf = F;
        const double ct = th;
        for (int i = 0; i < nf; ++i) {
            for (int j = 0; j < nt; ++j) {
                const double af = cf * std::exp2(f_span * (2.0 * i / (nf - 1) - 1.0));
                const double at = ct + th_span * (2.0 * j / (nt - 1) - 1.0);
                const auto s = consider(af, at, sx, sy);
                if (s.cost < best) {
                    best = s.cost;
                    F = af;
                    th = at;
                }
            }
        }
    };
    const double deg = kPi / 180.0;
    sigma_pass(b.sigma_xy_min, s_hi, 9);
    spatial_pass(0.6, 12.0 * deg, 13, 7);
    sigma_pass(sx / 1.6, sx * 1.6, 7);
    spatial_pass(0.15, 4.0 * deg, 7, 5);
    sigma_pass(sx / 1.25, sx * 1.25, 5);

    std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& c) { return a.cost < c.cost; });
    std::vector<GaborParams> out;
    for (const auto& s : pool) {
        if (out.size() >= count) {
            break;
        }
        const bool distinct = std::none_of(out.begin(), out.end(), [&](const GaborParams& g) {
            return std::abs(std::log(g.sigma_x / s.g.sigma_x)) < 0.05 && std::abs(std::log(g.sigma_y / s.g.sigma_y)) < 0.05 &&
                   std::abs(std::log(g.F0 / s.g.F0)) < 0.02;
        });
        if (distinct) {
            out.push_back(s.g);
        }
    }
    return out;
}

}  // namespace

void model_response(const GaborParams& g, const Extent& extent, const std::vector<Stimulus>& stimuli, VectorXd& r,
                    MatrixXd* J, double time_origin) {
    require_centered(extent, "Gabor model");
    const std::size_t m = stimuli.size();
    r.resize(static_cast<Eigen::Index>(m));
    if (J) {
        J->setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(kParamCount));
    }
    HalfPlaneEnvelope env(g, extent, J != nullptr);

    const int T = extent.frames;
    std::vector<double> wt(static_cast<std::size_t>(T));
    std::vector<double> tcs(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        const double tc = t - time_origin;
        tcs[static_cast<std::size_t>(t)] = tc;
        wt[static_cast<std::size_t>(t)] = std::exp(-tc * tc / (g.sigma_t * g.sigma_t));
    }
    const double c0 = std::cos(g.theta0);
    const double s0 = std::sin(g.theta0);
    const double k0x = g.F0 * c0;
    const double k0y = g.F0 * s0;

    for (const auto& st : stimuli) {
        if (st.kind != MotionKind::translation) {
            throw InvalidArgument("the Gabor response model covers translating waves only");
        }
    }
    const PairedSums ps = paired_sums(env, k0x, k0y, stimuli);

    for (std::size_t i = 0; i < m; ++i) {
        const auto& st = stimuli[i];
        const auto& sp = ps.plus[ps.slot[i]];
        const auto& sm = ps.minus[ps.slot[i]];

        double Cp = 0, Cm = 0, Sp = 0, Sm = 0, TSp = 0, TSm = 0, TTCp = 0, TTCm = 0;
        for (int t = 0; t < T; ++t) {
            const double tc = tcs[static_cast<std::size_t>(t)];
            const double w = wt[static_cast<std::size_t>(t)];
            const double a = g.phi0 - kTwoPi * g.ft0 * tc;
            const double b = st.phi - kTwoPi * st.motion * tc;
            const double cpl = std::cos(a + b);
            const double cmi = std::cos(a - b);
            Cp += w * cpl;
            Cm += w * cmi;
            if (J) {
                const double spl = std::sin(a + b);
                const double smi = std::sin(a - b);
                Sp += w * spl;
                Sm += w * smi;
                TSp += w * tc * spl;
                TSm += w * tc * smi;
                TTCp += w * tc * tc * cpl;
                TTCm += w * tc * tc * cmi;
            }
        }
        const double D = 0.5 * (sp.S * Cp + sm.S * Cm);
        const double pre = D + g.b;
        const double act = g.K * pre;
        r[static_cast<Eigen::Index>(i)] = act > 0.0 ? act : 0.0;
        if (!J || !(act > 0.0)) {
            continue;
        }
        const auto dp = spatial_derivatives(sp, g);
        const auto dm = spatial_derivatives(sm, g);
        const double K = g.K;
        auto row = J->row(static_cast<Eigen::Index>(i));
        row[0] = K * 0.5 * (dp[0] * Cp + dm[0] * Cm);
        row[1] = K * 0.5 * (dp[1] * Cp + dm[1] * Cm);
        row[2] = K * kPi * (sp.S * TSp + sm.S * TSm);
        row[3] = -K * 0.5 * (sp.S * Sp + sm.S * Sm);
        row[4] = K * 0.5 * (dp[2] * Cp + dm[2] * Cm);
        row[5] = K * 0.5 * (dp[3] * Cp + dm[3] * Cm);
        row[6] = K * (sp.S * TTCp + sm.S * TTCm) / (g.sigma_t * g.sigma_t * g.sigma_t);
        row[7] = pre;
        row[8] = K;
    }
}

PeakResponse find_peak(const ResponseTable& table, const GridSpec& spec, std::size_t filter_id) {
    if (table.grid_hash() != spec.hash() || table.stimulus_count() != spec.size()) {
        throw HashMismatch("response table does not belong to this grid");
    }
    if (filter_id >= table.filter_count()) {
        throw InvalidArgument(fmt::format("filter {} not in a table of {} filters", filter_id, table.filter_count()));
    }
    if (!table.filter_complete(filter_id)) {
        throw IncompleteTable(fmt::format("filter {} has missing rows; its peak cannot be located", filter_id));
    }
    std::size_t best = 0;
    float best_v = -1.0f;
    for (std::size_t s = 0; s < table.stimulus_count(); ++s) {
        const float v = table.get(s, filter_id);
        if (v > best_v) {
            best_v = v;
            best = s;
        }
    }
    if (!(best_v > 0.0f)) {
        throw InactiveFilter(filter_id);
    }
    PeakResponse p;
    p.filter_id = filter_id;
    p.stimulus_id = best;
    p.grid_indices = spec.unravel(best);
    p.stimulus = spec.at(best);
    p.r0 = best_v;
    return p;
}

std::array<std::vector<Stimulus>, 3> profile_stimuli(const Stimulus& peak, const ProfileSampling& sampling) {
    if (peak.kind != MotionKind::translation) {
        throw InvalidArgument("spectral profiles are defined for translation peaks");
    }
    std::array<std::vector<Stimulus>, 3> out;

    // Inserts the peak value into an ascending sweep unless already present.
    const auto sweep = [&](const GridAxis& axis, double peak_value, auto&& make) {
        std::vector<double> values;
        for (double v : axis.values()) {
            values.push_back(axis.to_internal(v));
        }
        std::vector<Stimulus> curve;
        bool inserted = false;
        for (double v : values) {
            if (!inserted && same_value(v, peak_value)) {
                inserted = true;
                curve.push_back(make(peak_value));
                continue;
            }
            if (!inserted && v > peak_value) {
                curve.push_back(make(peak_value));
                inserted = true;
            }
            curve.push_back(make(v));
        }
        if (!inserted) {
            curve.push_back(make(peak_value));
        }
        return curve;
    };

    const double peak_half_wavelength = 1.0 / (2.0 * peak.F);
    out[0] = sweep(sampling.half_wavelength, peak_half_wavelength, [&](double hl) {
        Stimulus s = peak;
        s.F = same_value(hl, peak_half_wavelength) ? peak.F : 1.0 / (2.0 * hl);
        return s;
    });
    out[1] = sweep(sampling.orientation, peak.theta, [&](double th) {
        Stimulus s = peak;
        s.theta = th;
        return s;
    });
    out[2] = sweep(sampling.temporal_frequency, peak.motion, [&](double ft) {
        Stimulus s = peak;
        s.motion = ft;
        return s;
    });
    return out;
}

std::vector<SpectralProfile> extract_profiles(const ResponseProvider& provider, const std::vector<PeakResponse>& peaks,
                                              const ProfileSampling& sampling) {
    std::vector<Stimulus> all;
    std::vector<std::array<std::size_t, 3>> sizes;
    for (const auto& p : peaks) {
        const auto curves = profile_stimuli(p.stimulus, sampling);
        sizes.push_back({curves[0].size(), curves[1].size(), curves[2].size()});
        for (const auto& c : curves) {
            all.insert(all.end(), c.begin(), c.end());
        }
    }
    std::vector<SpectralProfile> out(peaks.size());
    constexpr std::size_t kChunk = 8192;
    MatrixXd responses(static_cast<Eigen::Index>(all.size()), static_cast<Eigen::Index>(provider.filter_count()));
    for (std::size_t start = 0; start < all.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, all.size() - start);
        try {
            responses.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
                provider.respond(std::span<const Stimulus>(all.data() + start, n));
        } catch (const Error& e) {
            throw ProviderError(fmt::format("profile sweep stimuli {}..{}: {}", start, start + n - 1, e.what()));
        }
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < peaks.size(); ++i) {
        if (peaks[i].filter_id >= provider.filter_count()) {
            throw InvalidArgument(fmt::format("filter {} not served by the provider", peaks[i].filter_id));
        }
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t j = 0; j < sizes[i][a]; ++j, ++k) {
                out[i].curves[a].push_back(
                    {all[k], responses(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(peaks[i].filter_id))});
            }
        }
    }
    return out;
}

SpectralProfile extract_profiles(const ResponseProvider& provider, const PeakResponse& peak,
                                 const ProfileSampling& sampling) {
    return extract_profiles(provider, std::vector<PeakResponse>{peak}, sampling).front();
}

double normalized_cost(double L, double r0) {
    if (!(r0 > 0.0)) {
        throw InvalidArgument(fmt::format("peak response must be positive, got {}", r0));
    }
    return L / (r0 * r0);
}

GaborParams initial_guess(const PeakResponse& peak, const Extent& extent, double time_origin) {
    const auto& s = peak.stimulus;
    GaborParams g;
    g.F0 = s.F;
    g.theta0 = s.theta;
    g.ft0 = s.motion;
    g.phi0 = s.phi;
    g.sigma_x = 1.0 / (2.0 * s.F);
    g.sigma_y = g.sigma_x;
    g.sigma_t = 1.0;
    g.b = 0.0;
    g.K = 1.0;
    // Pre-activation of the K = 1, b = 0 model at the peak stimulus.
    const GaborResponseModel model(g, extent, time_origin);
    const double d = model.preactivation(s.F, s.theta, s.motion, s.phi);
    g.K = d > 0.0 ? peak.r0 / d : 1.0;
    return g;
}

FitResult fit_gabor(const SpectralProfile& profile, const PeakResponse& peak, const Extent& extent,
                    const FitOptions& opt) {
    if (!(peak.r0 > 0.0)) {
        throw InvalidArgument("fit needs a positive peak response");
    }
    ProfileData data;
    std::vector<double> target;
    for (std::size_t a = 0; a < 3; ++a) {
        if (profile.curves[a].empty()) {
            throw InvalidArgument("spectral profile has an empty curve");
        }
        for (const auto& smp : profile.curves[a]) {
            if (!(smp.activation >= 0.0) || !std::isfinite(smp.activation)) {
                throw InvalidArgument("profile activations must be finite and nonnegative");
            }
            data.stimuli.push_back(smp.stimulus);
            target.push_back(smp.activation);
            data.curve_of.push_back(static_cast<int>(a));
        }
    }
    data.y = Eigen::Map<const VectorXd>(target.data(), static_cast<Eigen::Index>(target.size()));
    const auto& stimuli = data.stimuli;
    const auto& curve_of = data.curve_of;
    const VectorXd& y = data.y;

    const GaborParams gp = initial_guess(peak, extent, opt.time_origin);
    const auto& b = opt.bounds;
    VectorXd lb(kParamCount);
    VectorXd ub(kParamCount);
    lb << b.F_min * b.F_min, -kInf, b.ft_min, -kInf, 1.0 / (b.sigma_xy_max * b.sigma_xy_max),
        1.0 / (b.sigma_xy_max * b.sigma_xy_max), 1.0 / (b.sigma_t_max * b.sigma_t_max),
        std::numeric_limits<double>::min(), -b.b_low * peak.r0 / gp.K;
    ub << b.F_max * b.F_max, kInf, b.ft_max, kInf, 1.0 / (b.sigma_xy_min * b.sigma_xy_min),
        1.0 / (b.sigma_xy_min * b.sigma_xy_min), 1.0 / (b.sigma_t_min * b.sigma_t_min), b.K_max,
        b.b_high * peak.r0 / gp.K;

    std::vector<GaborParams> starts{opt.initial ? *opt.initial : gp};
    if (!opt.initial && opt.seeds > 0) {
        // Each seed is refined on the separable problem, where the spatial
        // parameters move without dragging the amplitudes along.
        const SeparableSolver sep(data, extent, opt.time_origin, b);
        VectorXd lb4(4);
        VectorXd ub4(4);
        lb4 << lb[0], lb[1], lb[4], lb[5];
        ub4 << ub[0], ub[1], ub[4], ub[5];
        const ResidualFn pf = [&](const VectorXd& z, VectorXd& f) { sep.projected(z, f, nullptr); };
        const JacobianFn pj = [&](const VectorXd& z, const VectorXd&, MatrixXd& J) {
            VectorXd r;
            sep.projected(z, r, &J);
        };
        TrfOptions popt = opt.solver;
        popt.max_iterations = opt.screen_iterations;
        for (const auto& g : separable_seeds(data, peak, extent, opt, opt.seeds)) {
            VectorXd z4(4);
            z4 << g.F0 * g.F0, g.theta0, 1.0 / (g.sigma_x * g.sigma_x), 1.0 / (g.sigma_y * g.sigma_y);
            const TrfResult pr = trf_solve(pf, pj, z4, lb4, ub4, popt);
            const SeparableSeed refined =
                sep.solve(std::sqrt(pr.x[0]), pr.x[1], 1.0 / std::sqrt(pr.x[2]), 1.0 / std::sqrt(pr.x[3]));
            starts.push_back(std::isfinite(refined.cost) ? refined.g : g);
        }
    }

    const ResidualFn fun = [&](const VectorXd& z, VectorXd& f) {
        model_response(from_solver(z), extent, stimuli, f, nullptr, opt.time_origin);
        f -= y;
    };
    const JacobianFn jac = [&](const VectorXd& z, const VectorXd&, MatrixXd& J) {
        VectorXd r;
        const GaborParams g = from_solver(z);
        model_response(g, extent, stimuli, r, &J, opt.time_origin);
        J.col(0) *= 0.5 / g.F0;
        J.col(4) *= -0.5 * g.sigma_x * g.sigma_x * g.sigma_x;
        J.col(5) *= -0.5 * g.sigma_y * g.sigma_y * g.sigma_y;
        J.col(6) *= -0.5 * g.sigma_t * g.sigma_t * g.sigma_t;
    };
    // Every start gets a short screening run; the best one continues with the
    // full iteration budget.
    TrfResult sol;
    bool have = false;
    TrfOptions screen = opt.solver;
    if (starts.size() > 1) {
        screen.max_iterations = std::min(opt.solver.max_iterations, opt.screen_iterations);
    }
    for (const auto& g0 : starts) {
        TrfResult r = trf_solve(fun, jac, to_solver(g0), lb, ub, screen);
        if (!have || r.cost < sol.cost) {
            sol = std::move(r);
            have = true;
        }
    }
    if (sol.status == 0 && screen.max_iterations < opt.solver.max_iterations) {
        TrfOptions rest = opt.solver;
        rest.max_iterations = opt.solver.max_iterations - sol.iterations;
        TrfResult r = trf_solve(fun, jac, sol.x, lb, ub, rest);
        r.iterations += sol.iterations;
        r.cost_history.insert(r.cost_history.begin(), sol.cost_history.begin(), sol.cost_history.end() - 1);
        sol = std::move(r);
    }

    VectorXd z = sol.x;
    FitResult out;
    for (std::size_t i = 0; i < kParamCount; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (sol.active[ii] == -1) {
            z[ii] = lb[ii];
        } else if (sol.active[ii] == 1) {
            z[ii] = ub[ii];
        }
        // Widths are stored as inverse squares, so their bound sides swap.
        const bool inverse = i >= 4 && i <= 6;
        out.active_bounds[i] = inverse ? -sol.active[ii] : sol.active[ii];
    }
    out.params = from_solver(z);
    out.params.theta0 = wrap_two_pi(out.params.theta0);
    out.params.phi0 = wrap_pi(out.params.phi0);

    VectorXd f;
    model_response(out.params, extent, stimuli, f, nullptr, opt.time_origin);
    f -= y;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double sq = f[static_cast<Eigen::Index>(i)] * f[static_cast<Eigen::Index>(i)];
        switch (curve_of[i]) {
            case 0:
                out.L_F += sq;
                break;
            case 1:
                out.L_theta += sq;
                break;
            default:
                out.L_ft += sq;
                break;
        }
    }
    out.L = out.L_F + out.L_theta + out.L_ft;
    out.L_norm = normalized_cost(out.L, peak.r0);
    out.converged = sol.converged();
    out.status = sol.status;
    out.iterations = sol.iterations;
    out.cost_history = sol.cost_history;
    return out;
}

std::string fit_csv_header() {
    std::string h = "filter_id,peak_stimulus_id,r0," + gabor_csv_header() + ",L,L_F,L_theta,L_ft,L_norm,converged,iterations";
    for (const char* n : kParamNames) {
        h += fmt::format(",active_{}", n);
    }
    return h;
}

std::string to_csv_row(std::size_t filter_id, const PeakResponse& peak, const FitResult& fit) {
    std::string row = fmt::format("{},{},{},{},{},{},{},{},{},{},{}", filter_id, peak.stimulus_id, peak.r0,
                                  to_csv_row(fit.params), fit.L, fit.L_F, fit.L_theta, fit.L_ft, fit.L_norm,
                                  fit.converged ? 1 : 0, fit.iterations);
    for (int a : fit.active_bounds) {
        row += fmt::format(",{}", a);
    }
    return row;
}

Quartiles quartiles(std::vector<double> values) {
    if (values.empty()) {
        throw InvalidArgument("quartiles of an empty list");
    }
    std::sort(values.begin(), values.end());
    const auto at = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return {at(0.25), at(0.5), at(0.75), values.front(), values.back()};
}

}  // namespace stprobe
