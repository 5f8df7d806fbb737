#pragma once

#include <localdeform/geometry.hpp>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <string_view>
#include <variant>

namespace localdeform {

struct Arap
{};

struct Acap
{
    double scale_min = 0.1;
    double scale_max = 10.0;
};

/// Psi(sigma) = mu/2 (sum sigma^2 - d) - mu log J + lambda/2 (log J)^2.
struct NeoHookean
{
    double mu = 1.0;
    double lambda = 1.0;
};

/// ARAP on 3D edge vectors plus quadratic bending and a per-edge strain band.
struct ClothArap
{
    double bending_stiffness = 0.0;
    double strain_limit = 0.1;
    /// Weight of the projective term pulling each edge into its strain band.
    double strain_stiffness = 10.0;
};

struct PolylineArap
{};

using MaterialModel = std::variant<Arap, Acap, NeoHookean, ClothArap, PolylineArap>;

std::string_view material_name(const MaterialModel& material);

/// Checks material parameters and that the material suits the mesh kind.
void validate_material(const MaterialModel& material, const RestMesh& mesh);

/// True for the per-vertex (spokes and rims) energies.
bool is_patch_material(const MaterialModel& material);

/// Lower bound on singular values inside the Neo-Hookean prox.
inline constexpr double kSigmaFloor = 1e-6;

/// R = V U^T from the rotation-variant SVD of M = U S V^T (det R = +1).
SmallMat rotation_from_covariance(const SmallMat& M);

/// Best rotation R for 1/2 sum_k w_k |R d_k - d~_k|^2 with M = D W D~^T.
/// Columns of D and D_rest are matching deformed and rest edges.
SmallMat arap_fit_rotation(const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest,
                           const Eigen::VectorXd& weights);

double arap_patch_energy(const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest,
                         const Eigen::VectorXd& weights, const SmallMat& R);

struct RotationScale
{
    SmallMat rotation; // maps rest edges to deformed edges
    double scale = 1.0;
};

/// Minimises 1/2 sum_k w_k |s R d~_k - d_k|^2 over R in SO(d) and s in
/// [scale_min, scale_max]. Throws ZeroRestPatch when sum w |d~|^2 <= 0.
RotationScale acap_fit_rotation_scale(const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest,
                                      const Eigen::VectorXd& weights, double scale_min = 0.1,
                                      double scale_max = 10.0);

double nh_energy_sigma(const SmallVec& sigma, double mu, double lambda);
SmallVec nh_energy_sigma_gradient(const SmallVec& sigma, double mu, double lambda);

struct SigmaProxResult
{
    SmallVec sigma;
    int iterations = 0;
    bool converged = false; // false flags MaxInnerIterations; sigma is the best iterate
};

/// argmin over sigma >= kSigmaFloor of volume * Psi(sigma) + gamma/2 |sigma - sigma_in|^2,
/// by L-BFGS with a feasibility-preserving line search.
SigmaProxResult nh_prox_singular_values(const SmallVec& sigma_in, double gamma, double mu,
                                        double lambda, double volume);

/// Isometric quadratic bending matrix (|V| x |V|) of a triangle mesh; the
/// bending energy is 1/2 tr(V^T Q V). Throws NonManifoldEdge.
Eigen::SparseMatrix<double> bending_matrix(const RestMesh& mesh);

/// Clamps each column of D to a length in [(1-eps)|d~|, (1+eps)|d~|],
/// keeping its direction.
Eigen::MatrixXd strain_limit_project(const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest,
                                     double epsilon);

/// Single-edge version of strain_limit_project.
SmallVec strain_limit_edge(const SmallVec& d, const SmallVec& d_rest, double epsilon);

} // namespace localdeform
