#pragma once

// Unregularized transport by the transportation simplex. Meant as a test
// oracle: supports are capped at kExactSupportLimit points per side.

#include "sinkbisim/transport.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace sinkbisim {

inline constexpr std::size_t kExactSupportLimit = 64;

struct ExactTransportResult {
    double distance = 0.0;        ///< (optimal cost of D^p)^{1/p}
    double transport_cost = 0.0;  ///< optimal cost of D^p
    TransportPlan plan;
    std::size_t pivots = 0;
};

namespace detail {

/// Transportation simplex on a dense m x k problem with positive supplies a
/// and demands b. Northwest-corner start, MODI duals, Bland's rule: the
/// entering cell is the first (row-major) cell with negative reduced cost and
/// the leaving cell the first among the tied minimum-ratio cells.
class TransportationSimplex {
public:
    TransportationSimplex(std::vector<double> cost, std::vector<double> a, std::vector<double> b)
        : m_(a.size()), k_(b.size()), cost_(std::move(cost)), a_(std::move(a)), b_(std::move(b)),
          flow_(m_ * k_, 0.0), basic_(m_ * k_, 0) {}

    std::size_t solve() {
        northwest_corner();
        double scale = 0.0;
        for (double c : cost_) scale = std::max(scale, std::abs(c));
        const double eps = 1e-12 * (1.0 + scale);
        const std::size_t cap = 200000;
        std::size_t pivots = 0;
        std::vector<double> u(m_), v(k_);
        for (;;) {
            duals(u, v);
            std::size_t enter = npos;
            for (std::size_t cell = 0; cell < m_ * k_ && enter == npos; ++cell) {
                if (basic_[cell]) continue;
                const std::size_t i = cell / k_;
                const std::size_t j = cell % k_;
                if (cost_[cell] - u[i] - v[j] < -eps) enter = cell;
            }
            if (enter == npos) break;
            if (++pivots > cap) throw std::runtime_error("exact transport: pivot limit exceeded");
            pivot(enter);
        }
        return pivots;
    }

    [[nodiscard]] double flow(std::size_t i, std::size_t j) const { return flow_[i * k_ + j]; }

    [[nodiscard]] double objective() const {
        double total = 0.0;
        for (std::size_t c = 0; c < m_ * k_; ++c) total += flow_[c] * cost_[c];
        return total;
    }

private:
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    void northwest_corner() {
        std::vector<double> supply = a_;
        std::vector<double> demand = b_;
        std::size_t i = 0;
        std::size_t j = 0;
        for (;;) {
            const double x = std::min(supply[i], demand[j]);
            flow_[i * k_ + j] = x;
            basic_[i * k_ + j] = 1;
            supply[i] -= x;
            demand[j] -= x;
            if (i + 1 == m_ && j + 1 == k_) break;
            if (i + 1 == m_) {
                ++j;
            } else if (j + 1 == k_) {
                ++i;
            } else if (supply[i] <= demand[j]) {
                ++i;
            } else {
                ++j;
            }
        }
        // Floating-point leftovers are pushed into the final cell.
        double placed = 0.0;
        for (double f : flow_) placed += f;
        double total = 0.0;
        for (double x : a_) total += x;
        flow_[m_ * k_ - 1] = std::max(0.0, flow_[m_ * k_ - 1] + total - placed);
    }

    /// u_i + v_j = c_ij on basic cells; the basis is a spanning tree over
    /// rows and columns, so a traversal from u_0 = 0 fixes every dual.
    void duals(std::vector<double>& u, std::vector<double>& v) const {
        std::vector<char> seen_row(m_, 0), seen_col(k_, 0);
        std::vector<std::size_t> stack;  // nodes: rows 0..m-1, columns m..m+k-1
        u[0] = 0.0;
        seen_row[0] = 1;
        stack.push_back(0);
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            if (node < m_) {
                for (std::size_t j = 0; j < k_; ++j) {
                    if (basic_[node * k_ + j] && !seen_col[j]) {
                        v[j] = cost_[node * k_ + j] - u[node];
                        seen_col[j] = 1;
                        stack.push_back(m_ + j);
                    }
                }
            } else {
                const std::size_t j = node - m_;
                for (std::size_t i = 0; i < m_; ++i) {
                    if (basic_[i * k_ + j] && !seen_row[i]) {
                        u[i] = cost_[i * k_ + j] - v[j];
                        seen_row[i] = 1;
                        stack.push_back(i);
                    }
                }
            }
        }
    }

    void pivot(std::size_t enter) {
        const std::size_t ei = enter / k_;
        const std::size_t ej = enter % k_;
        // Tree path from row ei to column ej; with the entering cell it closes the cycle.
        const std::size_t nodes = m_ + k_;
        std::vector<std::size_t> parent(nodes, npos);
        std::vector<char> seen(nodes, 0);
        std::vector<std::size_t> queue{ei};
        seen[ei] = 1;
        for (std::size_t h = 0; h < queue.size(); ++h) {
            const std::size_t node = queue[h];
            if (node < m_) {
                for (std::size_t j = 0; j < k_; ++j) {
                    if (basic_[node * k_ + j] && !seen[m_ + j]) {
                        seen[m_ + j] = 1;
                        parent[m_ + j] = node;
                        queue.push_back(m_ + j);
                    }
                }
            } else {
                const std::size_t j = node - m_;
                for (std::size_t i = 0; i < m_; ++i) {
                    if (basic_[i * k_ + j] && !seen[i]) {
                        seen[i] = 1;
                        parent[i] = node;
                        queue.push_back(i);
                    }
                }
            }
        }
        // Walk back from column ej; edges alternate -, +, -, ... starting
        // next to the entering cell (which gains flow).
        std::vector<std::size_t> cycle;
        std::size_t node = m_ + ej;
        while (node != ei) {
            const std::size_t up = parent[node];
            const std::size_t cell = node >= m_ ? up * k_ + (node - m_) : node * k_ + (up - m_);
            cycle.push_back(cell);
            node = up;
        }
        double theta = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < cycle.size(); t += 2) theta = std::min(theta, flow_[cycle[t]]);
        std::size_t leave = npos;
        for (std::size_t t = 0; t < cycle.size(); t += 2) {
            if (flow_[cycle[t]] == theta && cycle[t] < leave) leave = cycle[t];
        }
        flow_[enter] += theta;
        for (std::size_t t = 0; t < cycle.size(); ++t) {
            double& f = flow_[cycle[t]];
            f = (t % 2 == 0) ? f - theta : f + theta;
        }
        flow_[leave] = 0.0;
        basic_[leave] = 0;
        basic_[enter] = 1;
    }

    std::size_t m_;
    std::size_t k_;
    std::vector<double> cost_;
    std::vector<double> a_;
    std::vector<double> b_;
    std::vector<double> flow_;
    std::vector<char> basic_;
};

}  // namespace detail

/// Optimal unregularized transport between mu1 and mu2 under D^p.
inline ExactTransportResult exact_transport(const CostMatrix& cost, const Vector& mu1, const Vector& mu2, double p) {
    detail::require(cost.rows() == mu1.size() && cost.cols() == mu2.size(), "exact_transport: shape mismatch");
    detail::require(detail::is_distribution(mu1, 1e-10) && detail::is_distribution(mu2, 1e-10),
                    "exact_transport: marginals must be probability vectors");
    detail::require(p >= 1.0, "exact_transport: p must be >= 1");
    std::vector<Eigen::Index> rows, cols;
    std::vector<double> a, b;
    detail::support_of(mu1, rows, a);
    detail::support_of(mu2, cols, b);
    detail::require(rows.size() <= kExactSupportLimit && cols.size() <= kExactSupportLimit,
                    "exact_transport: support exceeds oracle limit");
    // Rescale demands so both sides carry identical total mass.
    double sa = 0.0;
    double sb = 0.0;
    for (double x : a) sa += x;
    for (double x : b) sb += x;
    for (double& x : b) x *= sa / sb;

    const Matrix cost_p = cost.powered(p);
    std::vector<double> c(rows.size() * cols.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t q = 0; q < cols.size(); ++q) c[r * cols.size() + q] = cost_p(rows[r], cols[q]);
    }
    detail::TransportationSimplex simplex(std::move(c), a, b);
    ExactTransportResult res;
    res.pivots = simplex.solve();
    res.plan.plan = Matrix::Zero(mu1.size(), mu2.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t q = 0; q < cols.size(); ++q) res.plan.plan(rows[r], cols[q]) = simplex.flow(r, q);
    }
    res.transport_cost = std::max(0.0, simplex.objective());
    res.distance = detail::pth_root(res.transport_cost, p);
    return res;
}

inline double exact_wasserstein(const CostMatrix& cost, const Vector& mu1, const Vector& mu2, double p) {
    return exact_transport(cost, mu1, mu2, p).distance;
}

}  // namespace sinkbisim
