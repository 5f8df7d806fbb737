#include <localdeform/constraints.hpp>
#include <localdeform/errors.hpp>

#include <algorithm>
#include <string>

namespace localdeform {

ConstraintSet::Structure ConstraintSet::structure() const
{
    Structure s;
    for (const auto& [vertex, target] : handles) s.handle_ids.push_back(vertex);
    for (const AffineGroup& g : groups) {
        std::vector<int> ids = g.vertices;
        std::sort(ids.begin(), ids.end());
        s.groups.emplace_back(std::move(ids), g.prescribed());
    }
    return s;
}

namespace {

void check_vertex(int v, const RestMesh& mesh)
{
    if (v < 0 || v >= mesh.num_vertices()) {
        fail(ErrorCode::IndexOutOfRange, "constraint references vertex " + std::to_string(v));
    }
}

} // namespace

Eigen::MatrixXd constrained_values(const ConstraintSet& constraints, const RestMesh& mesh)
{
    const int embed = mesh.embed();
    Eigen::MatrixXd fixed = Eigen::MatrixXd::Zero(mesh.num_vertices(), embed);
    for (const auto& [v, target] : constraints.handles) {
        check_vertex(v, mesh);
        if (target.size() != embed) fail(ErrorCode::ShapeMismatch, "handle target has wrong dimension");
        if (!target.allFinite()) fail(ErrorCode::NonFinite, "handle target is not finite");
        fixed.row(v) = target.transpose();
    }
    for (const AffineGroup& g : constraints.groups) {
        if (!g.prescribed()) continue;
        const Eigen::MatrixXd& A = *g.A;
        const Eigen::VectorXd b = g.b.value_or(Eigen::VectorXd::Zero(embed));
        if (A.rows() != embed || A.cols() != embed || b.size() != embed) {
            fail(ErrorCode::ShapeMismatch, "prescribed affine map has wrong dimensions");
        }
        if (!A.allFinite() || !b.allFinite()) fail(ErrorCode::NonFinite, "prescribed affine map is not finite");
        for (int t : g.vertices) {
            check_vertex(t, mesh);
            fixed.row(t) = (A * mesh.vertices().row(t).transpose() + b).transpose();
        }
    }
    return fixed;
}

ReducedParameterization apply_affine_groups(const ConstraintSet& constraints, const RestMesh& mesh)
{
    const Eigen::Index n = mesh.num_vertices();
    const int embed = mesh.embed();
    // owner: -1 free, -2 handle, g >= 0 affine group
    std::vector<int> owner(static_cast<size_t>(n), -1);
    for (const auto& [v, target] : constraints.handles) {
        check_vertex(v, mesh);
        owner[static_cast<size_t>(v)] = -2;
    }
    for (size_t g = 0; g < constraints.groups.size(); ++g) {
        if (constraints.groups[g].vertices.empty()) fail(ErrorCode::InvalidArgument, "affine group is empty");
        for (int t : constraints.groups[g].vertices) {
            check_vertex(t, mesh);
            if (owner[static_cast<size_t>(t)] != -1) {
                fail(ErrorCode::OverlappingConstraints, "vertex " + std::to_string(t) + " is in more than one constraint");
            }
            owner[static_cast<size_t>(t)] = static_cast<int>(g);
        }
    }

    ReducedParameterization out;
    out.fixed = constrained_values(constraints, mesh);
    out.is_fixed.assign(static_cast<size_t>(n), false);

    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::Index dof = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (owner[static_cast<size_t>(i)] == -1) triplets.emplace_back(i, dof++, 1.0);
    }
    out.num_free_vertex_dofs = dof;
    for (size_t g = 0; g < constraints.groups.size(); ++g) {
        const AffineGroup& group = constraints.groups[g];
        if (group.prescribed()) {
            out.frame_dof_begin.push_back(-1);
            for (int t : group.vertices) out.is_fixed[static_cast<size_t>(t)] = true;
            continue;
        }
        out.frame_dof_begin.push_back(dof);
        // V_t = [V~_t, 1] M, one column of M per coordinate.
        for (int t : group.vertices) {
            for (int c = 0; c < embed; ++c) triplets.emplace_back(t, dof + c, mesh.vertices()(t, c));
            triplets.emplace_back(t, dof + embed, 1.0);
        }
        dof += embed + 1;
    }
    for (const auto& [v, target] : constraints.handles) out.is_fixed[static_cast<size_t>(v)] = true;

    out.P.resize(n, dof);
    out.P.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

Eigen::MatrixXd identity_frames(const ReducedParameterization& reduction, int embed)
{
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(reduction.num_dofs(), embed);
    for (Eigen::Index begin : reduction.frame_dof_begin) {
        if (begin < 0) continue;
        for (int c = 0; c < embed; ++c) q(begin + c, c) = 1.0;
    }
    return q;
}

} // namespace localdeform
