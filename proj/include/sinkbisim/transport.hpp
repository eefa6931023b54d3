#pragma once

// Entropic optimal transport over finite supports.
//
// The regularized problem is  min_w <D^p, w> - lambda H(w)  over couplings of
// (mu1, mu2); its Gibbs kernel is K = exp(-D^p / lambda). lambda -> 0 recovers
// exact transport and lambda -> inf the independent coupling. The value
// reported everywhere is the sharp distance (sum w_ij D_ij^p)^{1/p}; the
// entropy term is not included.

#include "sinkbisim/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <thread>
#include <tuple>
#include <vector>

namespace sinkbisim {

inline constexpr double kInfiniteLambda = std::numeric_limits<double>::infinity();

/// Nonnegative ground-cost matrix.
class CostMatrix {
public:
    explicit CostMatrix(Matrix entries) : entries_(std::move(entries)) {
        detail::require(entries_.allFinite(), "CostMatrix: entries must be finite");
        detail::require(entries_.size() == 0 || entries_.minCoeff() >= 0.0, "CostMatrix: entries must be nonnegative");
    }

    [[nodiscard]] const Matrix& entries() const noexcept { return entries_; }
    [[nodiscard]] Eigen::Index rows() const noexcept { return entries_.rows(); }
    [[nodiscard]] Eigen::Index cols() const noexcept { return entries_.cols(); }
    [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

    /// Elementwise D^p.
    [[nodiscard]] Matrix powered(double p) const {
        if (p == 1.0) return entries_;
        if (p == 2.0) return entries_.cwiseProduct(entries_);
        return entries_.array().pow(p).matrix();
    }

private:
    Matrix entries_;
};

/// Scaling vectors of an entropic plan, full length with NaN off the support.
///
/// Scaling form:  w_ij = mu1_i mu2_j u_i v_j exp(-D^p_ij / lambda).
/// Log form:      w_ij = mu1_i mu2_j exp((u_i + v_j - D^p_ij) / lambda),
///                i.e. u, v hold the dual potentials in cost units.
struct SinkhornPotentials {
    Vector u;
    Vector v;
    bool log_domain = false;
    double lambda = 0.0;

    [[nodiscard]] bool empty() const noexcept { return u.size() == 0; }

    /// Dual potentials in cost units.
    [[nodiscard]] Vector dual_f() const { return to_dual(u); }
    [[nodiscard]] Vector dual_g() const { return to_dual(v); }

private:
    [[nodiscard]] Vector to_dual(const Vector& x) const {
        if (log_domain) return x;
        Vector out(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = lambda * std::log(x(i));
        return out;
    }
};

struct SinkhornOptions {
    enum class Mode { automatic, scaling, log_domain };

    double tol = 1e-9;             ///< L-inf marginal violation at which iteration stops
    std::size_t max_iters = 10000;
    Mode mode = Mode::automatic;
    /// Automatic mode uses log-domain iterations when lambda < ratio * max(D^p).
    double stabilize_ratio = 0.05;
    /// Scalings are absorbed into the log potentials once |log u| or |log v| exceeds this.
    double absorb_threshold = 50.0;
    /// Cold log-domain solves with lambda below this fraction of max(D^p)
    /// anneal lambda geometrically from max(D^p) down to the target.
    double anneal_ratio = 0.01;
};

struct SinkhornResult {
    double distance = 0.0;            ///< sharp distance (sum w D^p)^{1/p}
    double transport_cost = 0.0;      ///< sum w D^p
    SinkhornPotentials potentials;
    std::size_t iterations = 0;
    double marginal_violation = 0.0;  ///< achieved L-inf column-marginal violation
    bool converged = false;
    bool log_domain = false;
};

namespace detail {

inline bool is_distribution(const Vector& mu, double tol) {
    if (mu.size() == 0) return false;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (!(mu(i) >= 0.0) || !std::isfinite(mu(i))) return false;
    }
    return std::abs(mu.sum() - 1.0) <= tol;
}

inline double log_sum_exp(std::span<const double> xs) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : xs) hi = std::max(hi, x);
    if (!std::isfinite(hi)) return hi;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - hi);
    return hi + std::log(s);
}

inline double pth_root(double cost, double p) {
    cost = std::max(cost, 0.0);
    if (p == 1.0) return cost;
    if (p == 2.0) return std::sqrt(cost);
    return std::pow(cost, 1.0 / p);
}

/// Reusable buffers for one support-restricted solve.
struct SinkhornWorkspace {
    std::vector<double> cost;    // m x k row-major D^p block (log-domain only)
    std::vector<double> kernel;  // m x k row-major
    std::vector<double> u, v, x, y, col, scratch;

    void resize(std::size_t m, std::size_t k) {
        cost.resize(m * k);
        kernel.resize(m * k);
        u.resize(m);
        v.resize(k);
        x.resize(m);
        y.resize(k);
        col.resize(k);
        scratch.resize(std::max(m, k));
    }
};

/// One transport problem restricted to the supports of its marginals.
struct SupportProblem {
    const Matrix* cost_p = nullptr;       ///< full powered cost D^p
    const Matrix* gibbs = nullptr;        ///< optional full exp(-D^p / lambda)
    std::span<const Eigen::Index> rows;   ///< support of mu1
    std::span<const double> a;            ///< mu1 on rows
    std::span<const Eigen::Index> cols;   ///< support of mu2
    std::span<const double> b;            ///< mu2 on cols
    double lambda = 1.0;
    double max_cost = 0.0;                ///< max of the full D^p, for mode selection

    [[nodiscard]] double c(std::size_t r, std::size_t q) const { return (*cost_p)(rows[r], cols[q]); }
};

struct SolveOutcome {
    double transport_cost = 0.0;
    std::size_t iterations = 0;
    double violation = std::numeric_limits<double>::infinity();
    bool converged = false;
    bool ok = false;  ///< false if the iteration broke down numerically
    bool log_domain = false;
};

/// Alternating marginal scaling on diag(u) Kt diag(v), where Kt is either the
/// plain Gibbs kernel (scaling mode) or exp(x + y - D^p / lambda) with log
/// offsets x, y that absorb large scalings (log-domain mode).
class SupportSolver {
public:
    SupportSolver(const SupportProblem& pb, SinkhornWorkspace& ws, const SinkhornOptions& opts)
        : pb_(pb), ws_(ws), opts_(opts), m_(pb.rows.size()), k_(pb.cols.size()), lambda_(pb.lambda) {
        ws_.resize(m_, k_);
    }

    SolveOutcome solve_scaling(const SinkhornPotentials* warm) {
        log_mode_ = false;
        lambda_ = pb_.lambda;
        if (pb_.gibbs != nullptr) {
            for (std::size_t r = 0; r < m_; ++r) {
                double* row = &ws_.kernel[r * k_];
                for (std::size_t c = 0; c < k_; ++c) row[c] = (*pb_.gibbs)(pb_.rows[r], pb_.cols[c]);
            }
        } else {
            for (std::size_t r = 0; r < m_; ++r) {
                double* row = &ws_.kernel[r * k_];
                for (std::size_t c = 0; c < k_; ++c) row[c] = std::exp(-pb_.c(r, c) / lambda_);
            }
        }
        std::fill(ws_.x.begin(), ws_.x.end(), 0.0);
        std::fill(ws_.y.begin(), ws_.y.end(), 0.0);
        if (!warm_v_scaling(warm)) std::fill(ws_.v.begin(), ws_.v.end(), 1.0);
        if (!update_u()) return {};
        return iterate(opts_.tol, opts_.max_iters, false);
    }

    SolveOutcome solve_log(const SinkhornPotentials* warm, std::size_t max_iters) {
        log_mode_ = true;
        for (std::size_t r = 0; r < m_; ++r) {
            for (std::size_t c = 0; c < k_; ++c) ws_.cost[r * k_ + c] = pb_.c(r, c);
        }
        const double target = pb_.lambda;
        const bool warm_ok = warm_y_dual(warm, target);
        std::vector<double> schedule;
        if (!warm_ok) {
            std::fill(ws_.y.begin(), ws_.y.end(), 0.0);
            if (pb_.max_cost > 0.0 && target < opts_.anneal_ratio * pb_.max_cost) {
                for (double l = pb_.max_cost; l > target; l *= 0.25) schedule.push_back(l);
            }
        }
        schedule.push_back(target);
        SolveOutcome out;
        std::size_t spent = 0;
        for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
            if (stage > 0) {
                // ws_.y holds g / lambda_prev; rescale so g is carried over.
                const double ratio = schedule[stage - 1] / schedule[stage];
                for (auto& yc : ws_.y) yc *= ratio;
            }
            lambda_ = schedule[stage];
            // ws_.y is g / lambda here; the iteration works with log V = g / lambda + log b.
            for (std::size_t c = 0; c < k_; ++c) ws_.y[c] += std::log(pb_.b[c]);
            resync_x();
            build_kernel();
            const bool last = stage + 1 == schedule.size();
            const std::size_t budget = max_iters > spent ? max_iters - spent : 0;
            out = iterate(last ? opts_.tol : std::max(opts_.tol, 1e-6), budget, true);
            spent += out.iterations;
            out.iterations = spent;
            if (!out.ok || last) break;
            for (std::size_t c = 0; c < k_; ++c) ws_.y[c] += std::log(ws_.v[c]) - std::log(pb_.b[c]);
        }
        out.log_domain = true;
        return out;
    }

    /// Writes the converged scalings into `dst`, reusing its storage.
    void store(SinkhornPotentials& dst, Eigen::Index full_rows, Eigen::Index full_cols) const {
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();
        if (dst.u.size() != full_rows) dst.u.resize(full_rows);
        if (dst.v.size() != full_cols) dst.v.resize(full_cols);
        dst.u.setConstant(nan);
        dst.v.setConstant(nan);
        dst.lambda = lambda_;
        dst.log_domain = log_mode_;
        if (!log_mode_) {
            double top = 0.0;
            for (std::size_t c = 0; c < k_; ++c) top = std::max(top, ws_.v[c] / pb_.b[c]);
            for (std::size_t r = 0; r < m_; ++r) dst.u(pb_.rows[r]) = ws_.u[r] / pb_.a[r] * top;
            for (std::size_t c = 0; c < k_; ++c) dst.v(pb_.cols[c]) = ws_.v[c] / pb_.b[c] / top;
            return;
        }
        double shift = 0.0;
        for (std::size_t r = 0; r < m_; ++r) {
            const double f = lambda_ * (ws_.x[r] + std::log(ws_.u[r]) - std::log(pb_.a[r]));
            dst.u(pb_.rows[r]) = f;
            shift += f;
        }
        shift /= static_cast<double>(m_);
        for (std::size_t r = 0; r < m_; ++r) dst.u(pb_.rows[r]) -= shift;
        for (std::size_t c = 0; c < k_; ++c) {
            dst.v(pb_.cols[c]) = lambda_ * (ws_.y[c] + std::log(ws_.v[c]) - std::log(pb_.b[c])) + shift;
        }
    }

private:
    static bool usable(const SinkhornPotentials* w, const SupportProblem& pb) {
        return w != nullptr && !w->empty() && w->lambda > 0.0 &&
               w->u.size() == pb.cost_p->rows() && w->v.size() == pb.cost_p->cols();
    }

    /// Column scalings from potentials stored in scaling form at the same lambda.
    /// Missing columns get the soft c-transform of the stored row scalings.
    bool warm_v_scaling(const SinkhornPotentials* w) {
        if (!usable(w, pb_)) return false;
        if (w->log_domain || w->lambda != lambda_) {
            if (!warm_y_dual(w, lambda_)) return false;
            const double top = *std::max_element(ws_.y.begin(), ws_.y.end());
            for (std::size_t c = 0; c < k_; ++c) ws_.v[c] = pb_.b[c] * std::exp(ws_.y[c] - top);
            std::fill(ws_.y.begin(), ws_.y.end(), 0.0);
            return true;
        }
        for (std::size_t c = 0; c < k_; ++c) {
            const double vs = w->v(pb_.cols[c]);
            if (vs > 0.0 && std::isfinite(vs)) {
                ws_.v[c] = pb_.b[c] * vs;
                continue;
            }
            double s = 0.0;
            for (std::size_t r = 0; r < m_; ++r) {
                const double us = w->u(pb_.rows[r]);
                if (us > 0.0 && std::isfinite(us)) s += pb_.a[r] * us * ws_.kernel[r * k_ + c];
            }
            if (!(s > 0.0) || !std::isfinite(s)) return false;
            ws_.v[c] = pb_.b[c] / s;
        }
        for (std::size_t c = 0; c < k_; ++c) {
            if (!(ws_.v[c] > 0.0) || !std::isfinite(ws_.v[c])) return false;
        }
        return true;
    }

    /// ws_.y = g / lambda over the column support, from any stored form.
    bool warm_y_dual(const SinkhornPotentials* w, double lambda) {
        if (!usable(w, pb_)) return false;
        const auto dual = [w](const Vector& x, Eigen::Index i) {
            const double xi = x(i);
            if (w->log_domain) return xi;
            return xi > 0.0 ? w->lambda * std::log(xi) : std::numeric_limits<double>::quiet_NaN();
        };
        bool any_f = false;
        for (std::size_t r = 0; r < m_ && !any_f; ++r) any_f = std::isfinite(dual(w->u, pb_.rows[r]));
        for (std::size_t c = 0; c < k_; ++c) {
            const double g = dual(w->v, pb_.cols[c]);
            if (std::isfinite(g)) {
                ws_.y[c] = g / lambda;
                continue;
            }
            if (!any_f) return false;
            std::size_t cnt = 0;
            for (std::size_t r = 0; r < m_; ++r) {
                const double f = dual(w->u, pb_.rows[r]);
                if (std::isfinite(f)) ws_.scratch[cnt++] = std::log(pb_.a[r]) + (f - pb_.c(r, c)) / lambda;
            }
            ws_.y[c] = -log_sum_exp({ws_.scratch.data(), cnt});
        }
        for (std::size_t c = 0; c < k_; ++c) {
            if (!std::isfinite(ws_.y[c])) return false;
        }
        return true;
    }

    bool update_u() {
        for (std::size_t r = 0; r < m_; ++r) {
            const double* row = &ws_.kernel[r * k_];
            double s = 0.0;
            for (std::size_t c = 0; c < k_; ++c) s += row[c] * ws_.v[c];
            const double ur = pb_.a[r] / s;
            if (!(s > 0.0) || !std::isfinite(ur) || ur == 0.0) return false;
            ws_.u[r] = ur;
        }
        return true;
    }

    /// Column sums of diag(u) Kt into ws_.col.
    void column_sums() {
        double* out = ws_.col.data();
        std::fill(out, out + k_, 0.0);
        for (std::size_t r = 0; r < m_; ++r) {
            const double* row = &ws_.kernel[r * k_];
            const double ur = ws_.u[r];
            for (std::size_t c = 0; c < k_; ++c) out[c] += ur * row[c];
        }
    }

    bool update_v() {
        for (std::size_t c = 0; c < k_; ++c) {
            const double s = ws_.col[c];
            const double vc = pb_.b[c] / s;
            if (!(s > 0.0) || !std::isfinite(vc) || vc == 0.0) return false;
            ws_.v[c] = vc;
        }
        return true;
    }

    /// Exact log-domain row update from y; resets u = v = 1.
    void resync_x() {
        for (std::size_t r = 0; r < m_; ++r) {
            for (std::size_t c = 0; c < k_; ++c) ws_.scratch[c] = ws_.y[c] - ws_.cost[r * k_ + c] / lambda_;
            ws_.x[r] = std::log(pb_.a[r]) - log_sum_exp({ws_.scratch.data(), k_});
        }
        std::fill(ws_.u.begin(), ws_.u.end(), 1.0);
        std::fill(ws_.v.begin(), ws_.v.end(), 1.0);
    }

    void resync_y() {
        for (std::size_t c = 0; c < k_; ++c) {
            for (std::size_t r = 0; r < m_; ++r) ws_.scratch[r] = ws_.x[r] - ws_.cost[r * k_ + c] / lambda_;
            ws_.y[c] = std::log(pb_.b[c]) - log_sum_exp({ws_.scratch.data(), m_});
        }
        std::fill(ws_.u.begin(), ws_.u.end(), 1.0);
        std::fill(ws_.v.begin(), ws_.v.end(), 1.0);
    }

    void absorb() {
        for (std::size_t r = 0; r < m_; ++r) ws_.x[r] += std::log(ws_.u[r]);
        for (std::size_t c = 0; c < k_; ++c) ws_.y[c] += std::log(ws_.v[c]);
        std::fill(ws_.u.begin(), ws_.u.end(), 1.0);
        std::fill(ws_.v.begin(), ws_.v.end(), 1.0);
    }

    void build_kernel() {
        for (std::size_t r = 0; r < m_; ++r) {
            for (std::size_t c = 0; c < k_; ++c) {
                ws_.kernel[r * k_ + c] = std::exp(ws_.x[r] + ws_.y[c] - ws_.cost[r * k_ + c] / lambda_);
            }
        }
    }

    [[nodiscard]] bool needs_absorb() const {
        const double hi = std::exp(opts_.absorb_threshold);
        const double lo = 1.0 / hi;
        for (double ur : ws_.u) {
            if (ur > hi || ur < lo) return true;
        }
        for (double vc : ws_.v) {
            if (vc > hi || vc < lo) return true;
        }
        return false;
    }

    /// Entry invariant: rows of diag(u) Kt diag(v) match a exactly.
    SolveOutcome iterate(double tol, std::size_t max_iters, bool absorb_enabled) {
        SolveOutcome out;
        for (;;) {
            column_sums();
            double viol = 0.0;
            for (std::size_t c = 0; c < k_; ++c) viol = std::max(viol, std::abs(ws_.v[c] * ws_.col[c] - pb_.b[c]));
            if (!std::isfinite(viol)) return out;
            out.violation = viol;
            if (viol <= tol) {
                out.converged = true;
                break;
            }
            if (out.iterations >= max_iters) break;
            ++out.iterations;
            if (!update_v()) {
                if (!absorb_enabled) return out;
                absorb();
                resync_y();
                resync_x();
                build_kernel();
                continue;
            }
            if (!update_u()) {
                if (!absorb_enabled) return out;
                absorb();
                resync_x();
                build_kernel();
                continue;
            }
            if (absorb_enabled && needs_absorb()) {
                absorb();
                build_kernel();
                if (!update_u()) {
                    resync_x();
                    build_kernel();
                }
            }
        }
        double cost = 0.0;
        for (std::size_t r = 0; r < m_; ++r) {
            const double* row = &ws_.kernel[r * k_];
            double acc = 0.0;
            if (log_mode_) {
                const double* crow = &ws_.cost[r * k_];
                for (std::size_t c = 0; c < k_; ++c) acc += row[c] * ws_.v[c] * crow[c];
            } else {
                for (std::size_t c = 0; c < k_; ++c) acc += row[c] * ws_.v[c] * pb_.c(r, c);
            }
            cost += ws_.u[r] * acc;
        }
        out.transport_cost = cost;
        out.ok = std::isfinite(cost);
        return out;
    }

    const SupportProblem& pb_;
    SinkhornWorkspace& ws_;
    const SinkhornOptions& opts_;
    std::size_t m_;
    std::size_t k_;
    double lambda_;
    bool log_mode_ = false;
};

/// Solves one support-restricted problem, choosing scaling or log-domain
/// iterations and restarting in log-domain on numerical breakdown. `warm`
/// and `out` may alias; potentials are written only on success.
inline SolveOutcome solve_support(const SupportProblem& pb, SinkhornWorkspace& ws, const SinkhornOptions& opts,
                                  const SinkhornPotentials* warm, SinkhornPotentials* out) {
    SupportSolver solver(pb, ws, opts);
    bool use_log = false;
    switch (opts.mode) {
        case SinkhornOptions::Mode::scaling: break;
        case SinkhornOptions::Mode::log_domain: use_log = true; break;
        case SinkhornOptions::Mode::automatic: use_log = pb.lambda < opts.stabilize_ratio * pb.max_cost; break;
    }
    SolveOutcome res;
    std::size_t spent = 0;
    if (!use_log) {
        res = solver.solve_scaling(warm);
        if (!res.ok) {
            spent = res.iterations;
            use_log = true;
        }
    }
    if (use_log) {
        res = solver.solve_log(warm, opts.max_iters > spent ? opts.max_iters - spent : 0);
        res.iterations += spent;
    }
    if (res.ok && out != nullptr) solver.store(*out, pb.cost_p->rows(), pb.cost_p->cols());
    return res;
}

inline void support_of(const Vector& mu, std::vector<Eigen::Index>& idx, std::vector<double>& mass) {
    idx.clear();
    mass.clear();
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (mu(i) > 0.0) {
            idx.push_back(i);
            mass.push_back(mu(i));
        }
    }
}

}  // namespace detail

/// Sharp (p, lambda)-Sinkhorn distance between mu1 and mu2 under `cost`.
/// Non-convergence is reported in the result, not thrown.
inline SinkhornResult sinkhorn_distance(const CostMatrix& cost, const Vector& mu1, const Vector& mu2, double p,
                                        double lambda, const SinkhornOptions& opts = {},
                                        const SinkhornPotentials* warm = nullptr) {
    detail::require(cost.rows() == mu1.size() && cost.cols() == mu2.size(), "sinkhorn_distance: shape mismatch");
    detail::require(detail::is_distribution(mu1, 1e-10) && detail::is_distribution(mu2, 1e-10),
                    "sinkhorn_distance: marginals must be probability vectors");
    detail::require(p >= 1.0, "sinkhorn_distance: p must be >= 1");
    detail::require(lambda > 0.0, "sinkhorn_distance: lambda must be positive");
    detail::require(opts.tol > 0.0, "sinkhorn_distance: tol must be positive");

    const Matrix cost_p = cost.powered(p);
    SinkhornResult res;
    if (std::isinf(lambda)) {
        res.transport_cost = mu1.dot(cost_p * mu2);
        res.distance = detail::pth_root(res.transport_cost, p);
        res.converged = true;
        return res;
    }

    std::vector<Eigen::Index> rows, cols;
    std::vector<double> a, b;
    detail::support_of(mu1, rows, a);
    detail::support_of(mu2, cols, b);
    detail::SupportProblem pb;
    pb.cost_p = &cost_p;
    pb.rows = rows;
    pb.cols = cols;
    pb.a = a;
    pb.b = b;
    pb.lambda = lambda;
    pb.max_cost = cost_p.size() > 0 ? cost_p.maxCoeff() : 0.0;
    detail::SinkhornWorkspace ws;
    const auto out = detail::solve_support(pb, ws, opts, warm, &res.potentials);
    res.transport_cost = out.transport_cost;
    res.distance = out.ok ? detail::pth_root(out.transport_cost, p) : std::numeric_limits<double>::quiet_NaN();
    res.iterations = out.iterations;
    res.marginal_violation = out.violation;
    res.converged = out.ok && out.converged;
    res.log_domain = out.log_domain;
    return res;
}

/// Coupling matrix between two marginals.
struct TransportPlan {
    Matrix plan;
};

/// Rebuilds the entropic plan encoded by `pots` (at lambda = pots.lambda).
inline TransportPlan plan_from_potentials(const CostMatrix& cost, const Vector& mu1, const Vector& mu2, double p,
                                          const SinkhornPotentials& pots) {
    detail::require(pots.u.size() == mu1.size() && pots.v.size() == mu2.size(),
                    "plan_from_potentials: potential size mismatch");
    const Matrix cost_p = cost.powered(p);
    const Vector f = pots.dual_f();
    const Vector g = pots.dual_g();
    TransportPlan out{Matrix::Zero(mu1.size(), mu2.size())};
    for (Eigen::Index i = 0; i < mu1.size(); ++i) {
        if (!(mu1(i) > 0.0)) continue;
        for (Eigen::Index j = 0; j < mu2.size(); ++j) {
            if (!(mu2(j) > 0.0)) continue;
            out.plan(i, j) = mu1(i) * mu2(j) * std::exp((f(i) + g(j) - cost_p(i, j)) / pots.lambda);
        }
    }
    return out;
}

/// (mu1^T D^p mu2)^{1/p}: the expected cost under the independent coupling.
inline double product_coupling_distance(const CostMatrix& cost, const Vector& mu1, const Vector& mu2, double p) {
    detail::require(cost.rows() == mu1.size() && cost.cols() == mu2.size(),
                    "product_coupling_distance: shape mismatch");
    detail::require(p >= 1.0, "product_coupling_distance: p must be >= 1");
    return detail::pth_root(mu1.dot(cost.powered(p) * mu2), p);
}

/// Sinkhorn potentials per unordered state pair (i < j), for warm starts.
class PotentialCache {
public:
    explicit PotentialCache(std::size_t num_states)
        : n_(num_states), slots_(num_states * (num_states > 0 ? num_states - 1 : 0) / 2) {}

    [[nodiscard]] std::size_t num_states() const noexcept { return n_; }
    [[nodiscard]] std::size_t capacity() const noexcept { return slots_.size(); }

    [[nodiscard]] std::size_t size() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(slots_.begin(), slots_.end(), [](const auto& s) { return !s.empty(); }));
    }

    [[nodiscard]] const SinkhornPotentials* find(std::size_t i, std::size_t j) const {
        const auto& s = slots_[index(i, j)];
        return s.empty() ? nullptr : &s;
    }

    /// Distinct pairs own distinct slots, so concurrent writers to different
    /// pairs need no synchronization.
    [[nodiscard]] SinkhornPotentials& slot(std::size_t i, std::size_t j) { return slots_[index(i, j)]; }

    void store(std::size_t i, std::size_t j, SinkhornPotentials pots) { slots_[index(i, j)] = std::move(pots); }

    void clear() {
        for (auto& s : slots_) s = SinkhornPotentials{};
    }

    [[nodiscard]] std::size_t index(std::size_t i, std::size_t j) const {
        if (!(i < j && j < n_)) throw std::out_of_range("PotentialCache: need i < j < num_states");
        return i * n_ - i * (i + 1) / 2 + (j - i - 1);
    }

private:
    std::size_t n_;
    std::vector<SinkhornPotentials> slots_;
};

struct PairFailure {
    std::size_t i = 0;
    std::size_t j = 0;
    double violation = 0.0;
    bool replaced_by_product = false;
};

struct PairwiseOptions {
    SinkhornOptions sinkhorn;
    unsigned threads = 1;
    /// Replace non-converged pairs with the product-coupling value.
    bool fallback_to_product = false;
    /// Also solve every cached pair from a cold start and record the
    /// iteration count and the largest warm/cold distance difference.
    bool shadow_cold = false;
};

struct PairwiseResult {
    Matrix w;
    std::size_t sinkhorn_iterations = 0;
    std::vector<PairFailure> failures;
    std::size_t cold_iterations = 0;  ///< shadow_cold only
    double max_shadow_diff = 0.0;     ///< shadow_cold only
};

/// W(i, j) = sharp distance between rows i and j of `transitions` under the
/// ground cost `metric`, for all i < j (mirrored, zero diagonal). An infinite
/// lambda uses the closed form (P D^p P^T)^{1/p}.
inline PairwiseResult pairwise_w_matrix(const Matrix& transitions, const Matrix& metric, double p, double lambda,
                                        PotentialCache* cache = nullptr, const PairwiseOptions& opts = {}) {
    const auto n = transitions.rows();
    detail::require(transitions.cols() == n && metric.rows() == n && metric.cols() == n,
                    "pairwise_w_matrix: shape mismatch");
    detail::require(detail::rows_stochastic(transitions, 1e-10), "pairwise_w_matrix: rows must be stochastic");
    detail::require(p >= 1.0, "pairwise_w_matrix: p must be >= 1");
    detail::require(lambda > 0.0, "pairwise_w_matrix: lambda must be positive");
    detail::require(cache == nullptr || cache->num_states() == static_cast<std::size_t>(n),
                    "pairwise_w_matrix: cache size mismatch");

    const Matrix cost_p = CostMatrix(metric).powered(p);
    PairwiseResult res;
    if (std::isinf(lambda)) {
        Matrix w = transitions * cost_p * transitions.transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            w(i, i) = 0.0;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double v = detail::pth_root(w(i, j), p);
                w(i, j) = v;
                w(j, i) = v;
            }
        }
        res.w = std::move(w);
        return res;
    }

    const double max_cost = n > 0 ? cost_p.maxCoeff() : 0.0;
    bool log_mode = false;
    switch (opts.sinkhorn.mode) {
        case SinkhornOptions::Mode::scaling: break;
        case SinkhornOptions::Mode::log_domain: log_mode = true; break;
        case SinkhornOptions::Mode::automatic: log_mode = lambda < opts.sinkhorn.stabilize_ratio * max_cost; break;
    }
    Matrix gibbs;
    if (!log_mode) gibbs = (-cost_p / lambda).array().exp().matrix();

    const auto un = static_cast<std::size_t>(n);
    std::vector<std::vector<Eigen::Index>> supp(un);
    std::vector<std::vector<double>> mass(un);
    for (Eigen::Index i = 0; i < n; ++i) {
        detail::support_of(transitions.row(i).transpose(), supp[static_cast<std::size_t>(i)],
                           mass[static_cast<std::size_t>(i)]);
    }

    res.w = Matrix::Zero(n, n);
    const unsigned nthreads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(std::max<std::size_t>(1, un))));
    struct ThreadOut {
        std::size_t iterations = 0;
        std::vector<PairFailure> failures;
        std::size_t cold_iterations = 0;
        double max_shadow_diff = 0.0;
    };
    std::vector<ThreadOut> outs(nthreads);

    auto work = [&](unsigned tid) {
        detail::SinkhornWorkspace ws;
        SinkhornPotentials scratch;
        auto& out = outs[tid];
        // Rows are dealt round-robin; early rows carry more pairs.
        for (std::size_t i = tid; i < un; i += nthreads) {
            for (std::size_t j = i + 1; j < un; ++j) {
                detail::SupportProblem pb;
                pb.cost_p = &cost_p;
                pb.gibbs = log_mode ? nullptr : &gibbs;
                pb.rows = supp[i];
                pb.a = mass[i];
                pb.cols = supp[j];
                pb.b = mass[j];
                pb.lambda = lambda;
                pb.max_cost = max_cost;
                SinkhornPotentials* slot = cache != nullptr ? &cache->slot(i, j) : nullptr;
                const auto sol = detail::solve_support(pb, ws, opts.sinkhorn, slot, slot);
                out.iterations += sol.iterations;
                double value = detail::pth_root(sol.transport_cost, p);
                if (!sol.ok || !sol.converged) {
                    PairFailure fail{i, j, sol.violation, false};
                    if (opts.fallback_to_product || !sol.ok) {
                        double prod = 0.0;
                        for (std::size_t r = 0; r < pb.rows.size(); ++r) {
                            for (std::size_t c = 0; c < pb.cols.size(); ++c) prod += pb.a[r] * pb.b[c] * pb.c(r, c);
                        }
                        value = detail::pth_root(prod, p);
                        fail.replaced_by_product = true;
                    }
                    out.failures.push_back(fail);
                }
                if (opts.shadow_cold && slot != nullptr) {
                    const auto cold = detail::solve_support(pb, ws, opts.sinkhorn, nullptr, nullptr);
                    out.cold_iterations += cold.iterations;
                    if (sol.ok && cold.ok) {
                        const double diff = std::abs(value - detail::pth_root(cold.transport_cost, p));
                        out.max_shadow_diff = std::max(out.max_shadow_diff, diff);
                    }
                }
                const auto ii = static_cast<Eigen::Index>(i);
                const auto jj = static_cast<Eigen::Index>(j);
                res.w(ii, jj) = value;
                res.w(jj, ii) = value;
            }
        }
    };

    if (nthreads == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(nthreads);
        for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(work, t);
    }
    for (auto& o : outs) {
        res.sinkhorn_iterations += o.iterations;
        res.cold_iterations += o.cold_iterations;
        res.max_shadow_diff = std::max(res.max_shadow_diff, o.max_shadow_diff);
        res.failures.insert(res.failures.end(), o.failures.begin(), o.failures.end());
    }
    std::sort(res.failures.begin(), res.failures.end(),
              [](const PairFailure& x, const PairFailure& y) { return std::tie(x.i, x.j) < std::tie(y.i, y.j); });
    return res;
}

}  // namespace sinkbisim
