#pragma once

// Independent brute-force references used by the unit and acceptance tests.

#include <localdeform/energies.hpp>
#include <localdeform/regularizers.hpp>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <random>

namespace oracles {

/// lambda * loss(t) + rho/2 (r - t)^2 for a prox candidate at radius t along x.
template <class Loss>
double radial_objective(Loss loss, double t, double r, double lambda, double rho)
{
    return lambda * loss(t) + 0.5 * rho * (r - t) * (r - t);
}

/// Minimum of the radial prox objective over a uniform scan of t in [0, r].
template <class Loss>
double scan_minimum(Loss loss, double r, double lambda, double rho, int points = 2001)
{
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < points; ++k) {
        const double t = r * k / (points - 1);
        best = std::min(best, radial_objective(loss, t, r, lambda, rho));
    }
    return best;
}

inline double scl1_scalar(double t, double s)
{
    return t < s ? t - t * t / (2.0 * s) : 0.5 * s;
}

/// Weighted Procrustes objective 1/2 sum w |R d - d~|^2.
inline double procrustes_objective(const Eigen::MatrixXd& R, const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest,
                                   const Eigen::VectorXd& w)
{
    return 0.5 * ((R * D - D_rest).colwise().squaredNorm().transpose().array() * w.array()).sum();
}

inline Eigen::Matrix2d rotation2(double angle)
{
    Eigen::Matrix2d R;
    R << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return R;
}

/// Best 2D rotation by a coarse angle grid followed by golden-section refinement.
inline double procrustes_grid_2d(const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest, const Eigen::VectorXd& w)
{
    const int n = 3600;
    double best_angle = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
        const double a = 2.0 * M_PI * k / n;
        const double f = procrustes_objective(rotation2(a), D, D_rest, w);
        if (f < best) {
            best = f;
            best_angle = a;
        }
    }
    double lo = best_angle - 2.0 * M_PI / n;
    double hi = best_angle + 2.0 * M_PI / n;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
        const double a = hi - phi * (hi - lo);
        const double b = lo + phi * (hi - lo);
        if (procrustes_objective(rotation2(a), D, D_rest, w) < procrustes_objective(rotation2(b), D, D_rest, w)) hi = b;
        else lo = a;
    }
    return std::min(best, procrustes_objective(rotation2(0.5 * (lo + hi)), D, D_rest, w));
}

/// Best 3D rotation by random restarts of a projected local search on SO(3).
inline double procrustes_restarts_3d(const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest, const Eigen::VectorXd& w,
                                     std::mt19937& rng, int restarts = 24)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng));
        q.normalize();
        Eigen::Matrix3d R = q.toRotationMatrix();
        double f = procrustes_objective(R, D, D_rest, w);
        double step = 0.5;
        while (step > 1e-12) {
            bool improved = false;
            for (int axis = 0; axis < 3 && !improved; ++axis) {
                for (double sign : {1.0, -1.0}) {
                    const Eigen::Matrix3d Rt =
                        Eigen::AngleAxisd(sign * step, Eigen::Vector3d::Unit(axis)).toRotationMatrix() * R;
                    const double ft = procrustes_objective(Rt, D, D_rest, w);
                    if (ft < f) {
                        R = Rt;
                        f = ft;
                        improved = true;
                        break;
                    }
                }
            }
            if (!improved) step *= 0.5;
        }
        best = std::min(best, f);
    }
    return best;
}

/// Per-vertex Neo-Hookean prox objective.
inline double nh_prox_objective(const localdeform::SmallVec& sigma, const localdeform::SmallVec& sigma_in, double gamma,
                                double mu, double lambda, double volume)
{
    return volume * localdeform::nh_energy_sigma(sigma, mu, lambda) + 0.5 * gamma * (sigma - sigma_in).squaredNorm();
}

/// Nested grid refinement of the Neo-Hookean prox objective over sigma in R^3.
inline Eigen::Vector3d nh_prox_grid_3d(const Eigen::Vector3d& sigma_in, double gamma, double mu, double lambda,
                                       double volume)
{
    Eigen::Vector3d center = sigma_in;
    double half = 1.0;
    for (int level = 0; level < 40; ++level) {
        const int n = 10;
        Eigen::Vector3d best_point = center;
        double best = std::numeric_limits<double>::infinity();
        for (int i = -n; i <= n; ++i) {
            for (int j = -n; j <= n; ++j) {
                for (int k = -n; k <= n; ++k) {
                    Eigen::Vector3d p = center + half / n * Eigen::Vector3d(i, j, k);
                    if (p.minCoeff() <= 1e-6) continue;
                    const double f = nh_prox_objective(p, sigma_in, gamma, mu, lambda, volume);
                    if (f < best) {
                        best = f;
                        best_point = p;
                    }
                }
            }
        }
        center = best_point;
        half *= 0.3;
    }
    return center;
}

} // namespace oracles
