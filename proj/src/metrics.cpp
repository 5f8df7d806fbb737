#include <localdeform/metrics.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace localdeform {

double max_incident_edge_strain(const RestMesh& mesh, const Eigen::MatrixXd& V, const std::vector<int>& vertices)
{
    const std::set<int> wanted(vertices.begin(), vertices.end());
    const Eigen::MatrixXi& E = mesh.elements();
    double worst = 0.0;
    for (Eigen::Index j = 0; j < E.rows(); ++j) {
        for (const auto& e : element_local_edges(mesh.kind())) {
            const int a = E(j, e[0]);
            const int b = E(j, e[1]);
            if (!wanted.count(a) && !wanted.count(b)) continue;
            const double rest = (mesh.vertices().row(b) - mesh.vertices().row(a)).norm();
            const double now = (V.row(b) - V.row(a)).norm();
            worst = std::max(worst, std::abs(now / rest - 1.0));
        }
    }
    return worst;
}

double mean_volume_error(const RestMesh& mesh, const Eigen::MatrixXd& V, double threshold)
{
    const Eigen::VectorXd d = (V - mesh.vertices()).rowwise().norm();
    const Eigen::MatrixXi& E = mesh.elements();
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index j = 0; j < E.rows(); ++j) {
        bool moved = false;
        for (Eigen::Index c = 0; c < E.cols(); ++c) moved = moved || d[E(j, c)] > threshold;
        if (!moved) continue;
        const SmallMat F = mesh.deformation_gradient(V, j);
        const double J = F.rows() == F.cols() ? F.determinant() : std::sqrt((F.transpose() * F).determinant());
        sum += std::abs(J - 1.0);
        ++count;
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

std::vector<int> displaced_handles(const RestMesh& mesh, const ConstraintSet& constraints)
{
    std::vector<int> out;
    for (const auto& [v, target] : constraints.handles) {
        if ((target.transpose() - mesh.vertices().row(v)).norm() > 0.0) out.push_back(v);
    }
    return out;
}

WeightMatch match_roi_weight(const std::shared_ptr<const RestMesh>& mesh, const ConstraintSet& constraints,
                             SolverParams params, Eigen::Index target_count, double rel_tol, double w_lo, double w_hi,
                             int max_evaluations)
{
    const double slack = rel_tol * static_cast<double>(target_count);
    WeightMatch best;
    double best_gap = std::numeric_limits<double>::infinity();
    double lo = std::log(w_lo), hi = std::log(w_hi);
    for (int k = 0; k < max_evaluations; ++k) {
        const double w = std::exp(0.5 * (lo + hi));
        params.locality.w = w;
        params.rho.reset();
        DeformResult result = solve(mesh, constraints, params);
        const double gap = static_cast<double>(result.stats.roi_count - target_count);
        if (std::abs(gap) < best_gap) {
            best_gap = std::abs(gap);
            best.w = w;
            best.result = std::move(result);
        }
        best.evaluations = k + 1;
        if (std::abs(gap) <= slack) {
            best.matched = true;
            break;
        }
        // A larger ROI than wanted calls for a heavier locality weight.
        if (gap > 0) lo = std::log(w);
        else hi = std::log(w);
    }
    return best;
}

} // namespace localdeform
