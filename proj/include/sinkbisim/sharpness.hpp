#pragma once

// How much looser is the entropic distance W^lambda than a sharper reference
// W^lambda' as the marginals become more entropic. Ground costs are
// Euclidean distances between random points on a sphere.

#include "sinkbisim/measures.hpp"
#include "sinkbisim/rng.hpp"
#include "sinkbisim/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sinkbisim {

/// `count` points drawn uniformly on the sphere of the given radius in R^dim
/// (normalized Gaussians). Returned as rows.
inline Matrix sample_sphere_points(std::size_t count, std::size_t dim, double radius, CounterRng& rng) {
    detail::require(dim >= 1, "sample_sphere_points: dim must be >= 1");
    detail::require(radius >= 0.0, "sample_sphere_points: radius must be nonnegative");
    Matrix pts(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        double norm = 0.0;
        do {
            for (Eigen::Index j = 0; j < pts.cols(); ++j) pts(i, j) = rng.normal();
            norm = pts.row(i).norm();
        } while (!(norm > 0.0));
        pts.row(i) *= radius / norm;
    }
    return pts;
}

inline Matrix euclidean_distances(const Matrix& pts) {
    const auto n = pts.rows();
    Matrix d = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = (pts.row(i) - pts.row(j)).norm();
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

namespace detail {

inline double digamma(double x) {
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double f = 1.0 / (x * x);
    return acc + std::log(x) - 0.5 / x -
           f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f * (1.0 / 240.0 - f / 132.0))));
}

/// Expected Shannon entropy (bits) of a symmetric Dirichlet(alpha) sample in `dim` coordinates.
inline double dirichlet_expected_entropy_bits(std::size_t dim, double alpha) {
    const double k = static_cast<double>(dim);
    return (digamma(k * alpha + 1.0) - digamma(alpha + 1.0)) / std::log(2.0);
}

/// Concentration whose expected entropy equals `target_bits`, by bisection on log alpha.
inline double concentration_for_entropy(std::size_t dim, double target_bits) {
    double lo = std::log(1e-8);
    double hi = std::log(1e8);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (dirichlet_expected_entropy_bits(dim, std::exp(mid)) < target_bits) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return std::exp(0.5 * (lo + hi));
}

}  // namespace detail

/// Probability vector with entropy within `tol_bits` of the target. Zero and
/// log2(dim) are returned exactly (point mass at coordinate 0, uniform).
/// Returns nullopt once `max_tries` rejections are spent.
inline std::optional<Vector> sample_simplex_with_entropy(std::size_t dim, double target_bits, double tol_bits,
                                                         CounterRng& rng, std::size_t max_tries = 200000) {
    detail::require(dim >= 1, "sample_simplex_with_entropy: dim must be >= 1");
    const double hmax = std::log2(static_cast<double>(dim));
    detail::require(target_bits >= 0.0 && target_bits <= hmax + 1e-12,
                    "sample_simplex_with_entropy: target must lie in [0, log2(dim)]");
    detail::require(tol_bits > 0.0, "sample_simplex_with_entropy: tolerance must be positive");
    if (target_bits == 0.0 || dim == 1) {
        Vector out = Vector::Zero(static_cast<Eigen::Index>(dim));
        out(0) = 1.0;
        return out;
    }
    if (std::abs(target_bits - hmax) <= 1e-12) {
        return Vector::Constant(static_cast<Eigen::Index>(dim), 1.0 / static_cast<double>(dim));
    }
    const double alpha = detail::concentration_for_entropy(dim, target_bits);
    for (std::size_t t = 0; t < max_tries; ++t) {
        const auto s = sample_dirichlet(dim, alpha, rng);
        Vector v = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(dim));
        if (std::abs(entropy_bits(v) - target_bits) <= tol_bits) return v;
    }
    return std::nullopt;
}

struct SharpnessConfig {
    std::size_t num_points = 32;
    double radius = 0.5;
    std::vector<std::size_t> dims{2, 8, 32};
    std::vector<double> lambdas{0.1, 1.0, kInfiniteLambda};
    double lambda_ref = 0.02;
    std::vector<double> entropy_buckets{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5};
    double entropy_tol = 0.01;
    std::size_t mu1_per_bucket = 20;
    std::size_t mu2_per_mu1 = 50;
    std::uint64_t seed = 0;
    SinkhornOptions sinkhorn{};
    /// The reference solve at small lambda' can converge very slowly on
    /// high-entropy marginals with near-tied costs.
    std::size_t ref_max_iters = 100000;
};

struct SharpnessRecord {
    std::size_t dim = 0;           ///< ambient dimension of the point cloud
    double bucket = 0.0;           ///< target H(mu1), bits
    double h_mu1 = 0.0;            ///< achieved H(mu1) = min marginal entropy, bits
    double h_mu2 = 0.0;
    double lambda = 0.0;
    double lambda_ref = 0.0;
    double w_lambda = 0.0;
    double w_ref = 0.0;
    double rel_error = 0.0;        ///< (W^lambda - W^lambda') / W^lambda'
    double ref_violation = 0.0;    ///< marginal violation of the reference solve
    bool ref_converged = true;
    std::size_t mu1_index = 0;
    std::size_t mu2_index = 0;
    std::uint64_t seed = 0;
};

struct SharpnessReport {
    std::vector<SharpnessRecord> records;
    std::vector<std::string> log;  ///< skipped buckets and solver warnings
};

/// For every dimension and entropy bucket: mu1_per_bucket draws of mu1 at
/// the bucket entropy, each paired with mu2_per_mu1 draws of mu2 whose
/// entropy targets evenly cover [H(mu1), log2(num_points)).
inline SharpnessReport sinkhorn_sharpness_bench(const SharpnessConfig& cfg) {
    SharpnessReport rep;
    const double hmax = std::log2(static_cast<double>(cfg.num_points));
    const CounterRng root(cfg.seed, streams::kSharpness);
    for (std::size_t di = 0; di < cfg.dims.size(); ++di) {
        const std::size_t dim = cfg.dims[di];
        CounterRng geo = root.split("points").split(dim);
        const CostMatrix cost(euclidean_distances(sample_sphere_points(cfg.num_points, dim, cfg.radius, geo)));
        for (std::size_t bi = 0; bi < cfg.entropy_buckets.size(); ++bi) {
            const double h1 = cfg.entropy_buckets[bi];
            CounterRng rng = root.split("bucket").split(dim * 1000 + bi);
            std::vector<SharpnessRecord> bucket;
            bool failed = false;
            std::size_t unconverged = 0;
            for (std::size_t i = 0; i < cfg.mu1_per_bucket && !failed; ++i) {
                const auto mu1 = sample_simplex_with_entropy(cfg.num_points, h1, cfg.entropy_tol, rng);
                if (!mu1) {
                    failed = true;
                    break;
                }
                const double eh1 = entropy_bits(*mu1);
                for (std::size_t j = 0; j < cfg.mu2_per_mu1; ++j) {
                    const double lo = std::max(eh1, h1);
                    const double h2 = lo + (hmax - lo) * (static_cast<double>(j) + 0.5) /
                                               static_cast<double>(cfg.mu2_per_mu1);
                    auto mu2 = sample_simplex_with_entropy(cfg.num_points, h2, cfg.entropy_tol, rng);
                    for (int retry = 0; mu2 && entropy_bits(*mu2) < eh1 && retry < 1000; ++retry) {
                        mu2 = sample_simplex_with_entropy(cfg.num_points, h2, cfg.entropy_tol, rng);
                    }
                    if (!mu2 || entropy_bits(*mu2) < eh1) {
                        failed = true;
                        break;
                    }
                    SinkhornOptions ref_opts = cfg.sinkhorn;
                    ref_opts.max_iters = std::max(ref_opts.max_iters, cfg.ref_max_iters);
                    const auto ref = sinkhorn_distance(cost, *mu1, *mu2, 1.0, cfg.lambda_ref, ref_opts);
                    if (!ref.converged) ++unconverged;
                    for (double lam : cfg.lambdas) {
                        const auto w = sinkhorn_distance(cost, *mu1, *mu2, 1.0, lam, cfg.sinkhorn);
                        SharpnessRecord r;
                        r.dim = dim;
                        r.bucket = h1;
                        r.h_mu1 = eh1;
                        r.h_mu2 = entropy_bits(*mu2);
                        r.lambda = lam;
                        r.lambda_ref = cfg.lambda_ref;
                        r.w_lambda = w.distance;
                        r.w_ref = ref.distance;
                        r.rel_error = ref.distance > 0.0 ? (w.distance - ref.distance) / ref.distance : 0.0;
                        r.ref_violation = ref.marginal_violation;
                        r.ref_converged = ref.converged;
                        r.mu1_index = i;
                        r.mu2_index = j;
                        r.seed = cfg.seed;
                        bucket.push_back(r);
                    }
                }
            }
            if (unconverged > 0) {
                rep.log.push_back("dim=" + std::to_string(dim) + " bucket=" + std::to_string(h1) + ": " +
                                  std::to_string(unconverged) + " reference solves stopped at the iteration cap");
            }
            if (failed) {
                rep.log.push_back("dim=" + std::to_string(dim) + " bucket=" + std::to_string(h1) +
                                  ": entropy targeting exhausted its retry budget, bucket skipped");
                continue;
            }
            rep.records.insert(rep.records.end(), bucket.begin(), bucket.end());
        }
    }
    return rep;
}

}  // namespace sinkbisim
