#pragma once

// Gaussian proposals for Gauss–Hermite integration over y, built in scaled coordinates.

#include "kolmo/field.hpp"
#include "kolmo/quadrature.hpp"

namespace kolmo::detail {

struct Proposal {
    Vector center;
    Vector scale;  // S = delta^{-1/2} T_delta
    Matrix chol;   // lower factor of the scaled proposal covariance
    double log_det = 0.0;

    Vector point(const Eigen::Ref<const Vector>& z) const { return center + scale.cwiseProduct(chol * z); }
    /// log(1 / p(y(z))) given the log standard-normal density of z.
    double log_inv_density(double log_normal) const { return 0.5 * log_det - log_normal; }
};

/// Proposal with covariance S Kp S around `mean`, tightened by the spatial profile of f:
/// precision K^-1 + V^-1 and the matching centre.
inline Proposal make_proposal(const Vector& mean, const Vector& scale, const Matrix& scaled_cov,
                              const SpaceTimeField* f, double widen = 1.0) {
    const int dim = static_cast<int>(mean.size());
    Proposal p;
    p.scale = scale;
    Matrix cov = scaled_cov * (widen * widen);
    if (f && f->spread && f->center) {
        Eigen::LLT<Matrix> kp(cov);
        Matrix prec = kp.solve(Matrix(Matrix::Identity(dim, dim)));
        const Vector sv = scale.cwiseQuotient(*f->spread);
        prec.diagonal() += sv.cwiseProduct(sv);
        prec = 0.5 * (prec + prec.transpose()).eval();
        Eigen::LLT<Matrix> mp(prec);
        const Vector rhs = kp.solve(Vector(mean.cwiseQuotient(scale))) +
                           sv.cwiseProduct(f->center->cwiseQuotient(*f->spread));
        p.center = scale.cwiseProduct(mp.solve(rhs));
        cov = mp.solve(Matrix(Matrix::Identity(dim, dim)));
        cov = 0.5 * (cov + cov.transpose()).eval();
    } else {
        p.center = mean;
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) throw ConditioningError("proposal covariance is not positive definite");
    p.chol = llt.matrixL();
    double ld = 0.0;
    for (int i = 0; i < dim; ++i) ld += 2.0 * std::log(p.chol(i, i)) + 2.0 * std::log(scale(i));
    p.log_det = ld;
    return p;
}

}  // namespace kolmo::detail
