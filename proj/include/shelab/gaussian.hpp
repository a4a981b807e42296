#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "shelab/errors.hpp"
#include "shelab/geometry.hpp"
#include "shelab/heat_kernel.hpp"
#include "shelab/rng.hpp"

namespace shelab {

inline Eigen::MatrixXd n0_covariance_matrix(const std::vector<ParabolicPoint>& pts) {
    auto n = Eigen::Index(pts.size());
    Eigen::MatrixXd C(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) C(i, j) = C(j, i) = n0_covariance(pts[i], pts[j]);
    return C;
}

// Covariance of the increments N0(p) - N0(base), built from the closed-form
// variogram so that microscopic separations keep full relative accuracy.
inline Eigen::MatrixXd n0_increment_covariance(const std::vector<ParabolicPoint>& pts, const ParabolicPoint& base) {
    auto n = Eigen::Index(pts.size());
    std::vector<double> g0(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) g0[i] = n0_variogram(pts[i], base);
    Eigen::MatrixXd C(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            C(i, j) = C(j, i) = 0.5 * (g0[i] + g0[j] - n0_variogram(pts[i], pts[j]));
    return C;
}

// Draws mean-zero Gaussian vectors with a given covariance, cov = B B^T.
// Pivoted LDL^T tolerates the singular matrices that repeated points produce.
class GaussianSampler {
public:
    explicit GaussianSampler(const Eigen::MatrixXd& cov, double rel_tol = 1e-8) {
        n_ = cov.rows();
        if (n_ == 0) return;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
        if (ldlt.info() != Eigen::Success) throw NumericalError("covariance indefinite");
        Eigen::VectorXd D = ldlt.vectorD();
        double tol = rel_tol * std::max(cov.trace(), 1e-300);
        for (Eigen::Index i = 0; i < n_; ++i) {
            if (D(i) < -tol) throw NumericalError("covariance indefinite");
            D(i) = std::sqrt(std::max(D(i), 0.0));
        }
        Eigen::MatrixXd L = ldlt.matrixL();
        L = L * D.asDiagonal();
        B_ = ldlt.transpositionsP().transpose() * L;
    }

    Eigen::Index size() const { return n_; }
    const Eigen::MatrixXd& factor() const { return B_; }

    // Draw number `draw` of component `k`; fully determined by (seed, draw, k).
    Eigen::VectorXd sample(std::uint64_t seed, std::uint64_t draw, int k = 0) const {
        Eigen::VectorXd z(n_);
        fill_normals(seed, draw, std::uint64_t(k) * std::uint64_t(n_), z.data(), std::uint64_t(n_));
        return B_ * z;
    }

private:
    Eigen::Index n_ = 0;
    Eigen::MatrixXd B_;
};

// Exact samples of the d-dimensional N0 at the points: result[draw][i*d+k].
inline std::vector<std::vector<double>> exact_gaussian_sampler(const std::vector<ParabolicPoint>& pts, int d,
                                                               std::uint64_t seed, std::size_t draws) {
    if (pts.size() > 2000) throw DomainError("exact_gaussian_sampler: at most 2000 points");
    if (d < 1) throw DomainError("exact_gaussian_sampler: d must be positive");
    std::vector<std::vector<double>> out(draws, std::vector<double>(pts.size() * std::size_t(d)));
    if (pts.empty()) return out;
    GaussianSampler s(n0_covariance_matrix(pts));
    for (std::size_t r = 0; r < draws; ++r)
        for (int k = 0; k < d; ++k) {
            Eigen::VectorXd v = s.sample(seed, r, k);
            for (std::size_t i = 0; i < pts.size(); ++i) out[r][i * d + k] = v(Eigen::Index(i));
        }
    return out;
}

}  // namespace shelab
