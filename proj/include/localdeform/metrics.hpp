#pragma once

#include <localdeform/geometry.hpp>
#include <localdeform/solver.hpp>

#include <Eigen/Core>

#include <vector>

namespace localdeform {

/// Largest |l / l~ - 1| over mesh edges incident to any vertex in `vertices`.
double max_incident_edge_strain(const RestMesh& mesh, const Eigen::MatrixXd& V, const std::vector<int>& vertices);

/// Mean |J_j - 1| over elements with a vertex displaced more than `threshold`,
/// where J_j is det F_j (or sqrt det F^T F for embedded surfaces). Zero when no
/// element qualifies.
double mean_volume_error(const RestMesh& mesh, const Eigen::MatrixXd& V, double threshold = kRoiThreshold);

/// Handles whose target differs from the rest position.
std::vector<int> displaced_handles(const RestMesh& mesh, const ConstraintSet& constraints);

struct WeightMatch
{
    double w = 0.0;
    DeformResult result;
    int evaluations = 0;
    bool matched = false;
};

/// Bisects the locality weight on a log scale until the ROI count lands within
/// `rel_tol` of `target_count`. Assumes the count does not increase with w.
WeightMatch match_roi_weight(const std::shared_ptr<const RestMesh>& mesh, const ConstraintSet& constraints,
                             SolverParams params, Eigen::Index target_count, double rel_tol = 0.05,
                             double w_lo = 1e-3, double w_hi = 1e3, int max_evaluations = 40);

} // namespace localdeform
