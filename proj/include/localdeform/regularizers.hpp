#pragma once

#include <localdeform/geometry.hpp>

#include <Eigen/Core>

namespace localdeform {

enum class Regularizer { scl1, l21, none };

/// Locality term: per-vertex weight lambda_i = w * a_i on the clamped loss.
struct LocalityParams
{
    double w = 0.0;
    double s = 1.0;
    Regularizer regularizer = Regularizer::scl1;

    /// lambda_i = w * a_i for every vertex of `mesh`.
    Eigen::VectorXd per_vertex_lambda(const RestMesh& mesh) const;
};

/// Smoothly clamped l1 loss: |x| - |x|^2 / (2s) below s, s/2 from s on.
double scl1_value(const SmallVec& x, double s);

/// argmin_z lambda*scl1(z) + rho/2 |x - z|^2. Requires rho > lambda / s
/// (SafeguardViolated otherwise); lambda == 0 returns x.
SmallVec scl1_prox(const SmallVec& x, double lambda, double rho, double s);

double l21_value(const SmallVec& x);

/// Block soft-thresholding: max(0, 1 - lambda / (rho |x|)) x.
SmallVec l21_prox(const SmallVec& x, double lambda, double rho);

/// Value of the selected regularizer (0 for Regularizer::none).
double regularizer_value(Regularizer kind, const SmallVec& x, double s);

/// Proximal map of the selected regularizer (identity for Regularizer::none).
SmallVec regularizer_prox(Regularizer kind, const SmallVec& x, double lambda, double rho, double s);

} // namespace localdeform
