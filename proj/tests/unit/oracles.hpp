#pragma once

// Test-only reference implementations, written independently of the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Minimum of <C^p, P> over the transportation polytope, by enumerating every
/// choice of (m + k - 1) cells and keeping the feasible basic solutions.
inline double brute_force_ot_cost(const Mat& c, const Vec& a, const Vec& b, double p) {
    const int m = static_cast<int>(a.size());
    const int k = static_cast<int>(b.size());
    const int cells = m * k;
    const int basis = m + k - 1;
    Mat eq = Mat::Zero(m + k, cells);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < k; ++j) {
            eq(i, i * k + j) = 1.0;
            eq(m + j, i * k + j) = 1.0;
        }
    }
    Vec rhs(m + k);
    rhs << a, b;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> pick(static_cast<std::size_t>(basis));
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == basis) {
            Mat sub(m + k, basis);
            for (int t = 0; t < basis; ++t) sub.col(t) = eq.col(pick[static_cast<std::size_t>(t)]);
            Eigen::FullPivLU<Mat> lu(sub);
            if (lu.rank() < basis) return;
            const Vec x = lu.solve(rhs);
            if ((sub * x - rhs).cwiseAbs().maxCoeff() > 1e-10) return;
            if (x.minCoeff() < -1e-12) return;
            double cost = 0.0;
            for (int t = 0; t < basis; ++t) {
                const int cell = pick[static_cast<std::size_t>(t)];
                cost += x(t) * std::pow(c(cell / k, cell % k), p);
            }
            best = std::min(best, cost);
            return;
        }
        for (int cell = start; cell <= cells - (basis - depth); ++cell) {
            pick[static_cast<std::size_t>(depth)] = cell;
            rec(cell + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

/// V = (I - g P)^{-1} R via Gaussian elimination with partial pivoting.
inline Vec solve_values(const Mat& p, const Vec& r, double g) {
    const int n = static_cast<int>(r.size());
    Mat a = Mat::Identity(n, n) - g * p;
    Vec x = r;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int row = col + 1; row < n; ++row) {
            if (std::abs(a(row, col)) > std::abs(a(piv, col))) piv = row;
        }
        a.row(col).swap(a.row(piv));
        std::swap(x(col), x(piv));
        for (int row = col + 1; row < n; ++row) {
            const double f = a(row, col) / a(col, col);
            a.row(row) -= f * a.row(col);
            x(row) -= f * x(col);
        }
    }
    for (int row = n - 1; row >= 0; --row) {
        double s = x(row);
        for (int col = row + 1; col < n; ++col) s -= a(row, col) * x(col);
        x(row) = s / a(row, row);
    }
    return x;
}

/// Mutual information / arithmetic-mean entropy normalization, from counts.
inline double nmi(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
    const std::size_t n = x.size();
    std::size_t kx = 0, ky = 0;
    for (auto v : x) kx = std::max(kx, v + 1);
    for (auto v : y) ky = std::max(ky, v + 1);
    Mat joint = Mat::Zero(static_cast<int>(kx), static_cast<int>(ky));
    for (std::size_t i = 0; i < n; ++i) joint(static_cast<int>(x[i]), static_cast<int>(y[i])) += 1.0 / static_cast<double>(n);
    const Vec px = joint.rowwise().sum();
    const Vec py = joint.colwise().sum().transpose();
    auto h = [](const Vec& q) {
        double s = 0.0;
        for (int i = 0; i < q.size(); ++i) if (q(i) > 0) s -= q(i) * std::log(q(i));
        return s;
    };
    double mi = 0.0;
    for (int i = 0; i < joint.rows(); ++i) {
        for (int j = 0; j < joint.cols(); ++j) {
            if (joint(i, j) > 0) mi += joint(i, j) * std::log(joint(i, j) / (px(i) * py(j)));
        }
    }
    const double denom = 0.5 * (h(px) + h(py));
    return denom > 0 ? mi / denom : 0.0;
}

}  // namespace oracle
