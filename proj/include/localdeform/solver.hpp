#pragma once

#include <localdeform/constraints.hpp>
#include <localdeform/energies.hpp>
#include <localdeform/geometry.hpp>
#include <localdeform/regularizers.hpp>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace localdeform {

struct SolverParams
{
    MaterialModel material = Arap{};
    LocalityParams locality;
    /// Z-block penalty; derived as 2 w max(a_i) / s when unset.
    std::optional<double> rho;
    /// X-block penalty (Neo-Hookean); derived as (mu + lambda) * mean element volume when unset.
    std::optional<double> gamma;
    int max_iters = 2000;
    /// Relative to the bounding-box diagonal. Zero disables the early stop.
    double tol_primal = 1e-4;
    double tol_dual = 1e-4;
    int iters_per_frame = 10;
    int threads = 1;
};

/// Checks every parameter and fills in rho and gamma when unset.
/// Throws SafeguardViolated when an explicit rho <= w max(a_i) / s.
SolverParams validate_params(SolverParams params, const RestMesh& mesh);

/// Raw infinity norms for one iteration.
struct IterationResiduals
{
    double primal_z = 0.0; // |V - V~ - Z|
    double dual_z = 0.0;   // rho |Z^{k+1} - Z^k|
    double primal_x = 0.0; // |D_j V - R_j X_j| (Neo-Hookean only)
};

struct PhaseTimings
{
    double local_x = 0.0;
    double local_z = 0.0;
    double global = 0.0;
    double dual = 0.0;
};

/// Local variables of one vertex patch (ARAP family) or one element (Neo-Hookean).
struct ElementLocalState
{
    /// ARAP: R with R D ~ D~. ACAP: rest-to-deformed rotation.
    /// Neo-Hookean: rotation held fixed through the next global step.
    SmallMat rotation;
    SmallMat X;     // Neo-Hookean symmetric factor
    SmallVec sigma; // Neo-Hookean singular values of X
    double scale = 1.0;
    SmallMat W;     // Neo-Hookean dual, deformation-gradient space
};

struct SolverState
{
    Eigen::MatrixXd V;
    Eigen::MatrixXd Z;
    Eigen::MatrixXd U;
    std::vector<ElementLocalState> local;
    Eigen::MatrixXd strain_targets; // cloth: one row per unique edge
    std::vector<IterationResiduals> history;
    long long iterations = 0;
};

struct DeformResult
{
    Eigen::MatrixXd V;
    DisplacementStats stats;
    double roi_threshold = kRoiThreshold;
    int iterations = 0;
    long long total_iterations = 0;
    IterationResiduals residuals;
    bool converged = false;
    double wall_time = 0.0;
    PhaseTimings timings;
    int factorizations = 0;
    std::vector<IterationResiduals> history;
};

/// Three-block ADMM solver for locality-regularised elastic deformation.
///
/// One instance owns one state and is single-writer. Handle targets may be
/// changed between iterations without refactoring; changing the constraint
/// structure or any penalty refactors lazily before the next global step.
class Solver
{
public:
    Solver(std::shared_ptr<const RestMesh> mesh, SolverParams params, ConstraintSet constraints = {});

    const RestMesh& mesh() const { return *m_mesh; }
    std::shared_ptr<const RestMesh> mesh_ptr() const { return m_mesh; }
    const SolverParams& params() const { return m_params; }
    const ConstraintSet& constraints() const { return m_constraints; }
    const SolverState& state() const { return m_state; }

    void set_params(SolverParams params);
    void set_constraints(ConstraintSet constraints);
    /// Moves existing handles; throws InvalidArgument for a vertex that is not a handle.
    void set_handle_targets(const std::map<int, Eigen::VectorXd>& targets);
    /// Replaces the whole state (warm start). Shapes must match the mesh.
    void set_state(SolverState state);

    /// V = V~ with constrained rows pinned; Z, U, W zero; local variables at rest.
    void reset();
    /// Zeroes Z, U and W, keeping V and the local variables.
    void reset_duals();
    /// Makes the current V the new rest shape and resets the state.
    void reset_rest();

    void local_step_x();
    void local_step_z();
    void global_step();
    IterationResiduals dual_update();

    /// One full iteration: local X, local Z, global V, dual updates.
    IterationResiduals iterate();

    /// Warm-started run of at most `max_iters` iterations (params().max_iters if < 0).
    DeformResult run(int max_iters = -1);

    /// Converged under the current tolerances for residuals `r`.
    bool is_converged(const IterationResiduals& r) const;

    double elastic_energy() const;
    double locality_energy() const;
    double augmented_lagrangian() const;

    int factorization_count() const { return m_factorizations; }
    const PhaseTimings& timings() const { return m_timings; }

    /// Solves the reduced global system for right-hand side `rhs` (|V| x embed,
    /// already including the penalty terms) and returns full positions.
    Eigen::MatrixXd solve_global(const Eigen::MatrixXd& rhs);

    /// Unreduced system matrix currently in use.
    const Eigen::SparseMatrix<double>& system_matrix();
    /// Reduced system matrix P^T A P (+ frame regularisation).
    const Eigen::SparseMatrix<double>& reduced_matrix();

private:
    struct MatrixKey
    {
        size_t material_index = 0;
        double rho = 0.0;
        double gamma = 0.0;
        double bending = 0.0;
        double strain = 0.0;
        ConstraintSet::Structure structure;
        const RestMesh* mesh = nullptr;
        bool operator==(const MatrixKey&) const = default;
    };

    MatrixKey current_key() const;
    void ensure_factorized();
    void init_cloth_edges();
    /// Pinned rows carry no locality unknown: Z = V - V~ and U = 0.
    void pin_fixed_splits();
    double element_penalty(Eigen::Index j) const;
    Eigen::MatrixXd global_rhs() const;

    std::shared_ptr<const RestMesh> m_mesh;
    /// Parameters as given; defaults are re-derived when the rest mesh changes.
    SolverParams m_requested;
    SolverParams m_params;
    ConstraintSet m_constraints;
    SolverState m_state;
    Eigen::VectorXd m_lambda;

    ReducedParameterization m_reduction;
    Eigen::MatrixXd m_identity_frames;
    Eigen::SparseMatrix<double> m_system;
    Eigen::SparseMatrix<double> m_reduced;
    Eigen::SparseMatrix<double> m_reduced_cross; // P^T A
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> m_factor;
    std::optional<MatrixKey> m_key;
    bool m_reduction_valid = false;
    int m_factorizations = 0;

    Eigen::SparseMatrix<double> m_bending;
    std::vector<std::array<int, 2>> m_cloth_edges;
    Eigen::MatrixXd m_cloth_rest_edges;
    Eigen::VectorXd m_acap_denominators;
    double m_mean_volume = 1.0;

    Eigen::MatrixXd m_previous_Z;
    PhaseTimings m_timings;
};

/// One-shot (or warm-started) solve.
DeformResult solve(std::shared_ptr<const RestMesh> mesh, const ConstraintSet& constraints,
                   const SolverParams& params, const SolverState* warm_start = nullptr);

} // namespace localdeform
