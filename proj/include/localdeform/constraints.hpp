#pragma once

#include <localdeform/geometry.hpp>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <map>
#include <optional>
#include <vector>

namespace localdeform {

/// Vertex set whose positions follow one affine map of their rest positions.
///
/// A free group solves for its map; a prescribed group uses
/// V_t = A * V~_t + b for every member t.
struct AffineGroup
{
    std::vector<int> vertices;
    std::optional<Eigen::MatrixXd> A;
    std::optional<Eigen::VectorXd> b;

    bool prescribed() const { return A.has_value(); }
};

struct ConstraintSet
{
    std::map<int, Eigen::VectorXd> handles; // vertex -> target
    std::vector<AffineGroup> groups;

    /// Identifies everything that changes the reduced system matrix.
    struct Structure
    {
        std::vector<int> handle_ids;
        std::vector<std::pair<std::vector<int>, bool>> groups;
        bool operator==(const Structure&) const = default;
    };
    Structure structure() const;
};

/// Weight pulling free affine frames toward the identity.
inline constexpr double kFrameRegularization = 1e-8;

/// Linear reduction V = P q + fixed (applied per coordinate column).
struct ReducedParameterization
{
    Eigen::SparseMatrix<double> P;  // |V| x dofs
    Eigen::MatrixXd fixed;          // |V| x embed, zero on unconstrained rows
    std::vector<bool> is_fixed;     // rows pinned by handles or prescribed groups
    std::vector<Eigen::Index> frame_dof_begin; // first dof of each free group (-1 if prescribed)
    Eigen::Index num_free_vertex_dofs = 0;

    Eigen::Index num_dofs() const { return P.cols(); }
};

/// Validates constraints against the mesh (index range, finite targets,
/// disjointness; OverlappingConstraints) and builds the reduction.
ReducedParameterization apply_affine_groups(const ConstraintSet& constraints, const RestMesh& mesh);

/// Recomputes only the pinned values (handle targets, prescribed groups).
Eigen::MatrixXd constrained_values(const ConstraintSet& constraints, const RestMesh& mesh);

/// Reduced coordinates of the identity frame for every free group, per column.
Eigen::MatrixXd identity_frames(const ReducedParameterization& reduction, int embed);

} // namespace localdeform
