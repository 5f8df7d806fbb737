#include <localdeform/errors.hpp>
#include <localdeform/geometry.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace localdeform {

namespace {

int kind_dim(MeshKind kind)
{
    switch (kind) {
    case MeshKind::polyline: return 1;
    case MeshKind::triangle: return 2;
    case MeshKind::tet: return 3;
    }
    return 0;
}

double clamp_cotan(double w)
{
    if (!std::isfinite(w)) return w > 0 ? kCotanClamp : -kCotanClamp;
    return std::clamp(w, -kCotanClamp, kCotanClamp);
}

Eigen::Vector3d as3(const Eigen::MatrixXd& V, int i)
{
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    p.head(V.cols()) = V.row(i).transpose();
    return p;
}

double raw_measure(const Eigen::MatrixXd& V, const Eigen::MatrixXi& T, Eigen::Index j, int dim)
{
    const Eigen::Vector3d p0 = as3(V, T(j, 0));
    const Eigen::Vector3d p1 = as3(V, T(j, 1));
    if (dim == 1) return (p1 - p0).norm();
    const Eigen::Vector3d p2 = as3(V, T(j, 2));
    if (dim == 2) return 0.5 * (p1 - p0).cross(p2 - p0).norm();
    const Eigen::Vector3d p3 = as3(V, T(j, 3));
    return std::abs((p1 - p0).dot((p2 - p0).cross(p3 - p0))) / 6.0;
}

// Cotangent weights for each local edge (ordering from element_local_edges).
Eigen::VectorXd element_cotan_weights(const Eigen::MatrixXd& V, const Eigen::MatrixXi& T,
                                      Eigen::Index j, int dim, double measure)
{
    if (dim == 1) return Eigen::VectorXd::Ones(1);
    if (dim == 2) {
        Eigen::VectorXd w(3);
        for (int k = 0; k < 3; ++k) {
            const Eigen::Vector3d pk = as3(V, T(j, k));
            const Eigen::Vector3d e1 = as3(V, T(j, (k + 1) % 3)) - pk;
            const Eigen::Vector3d e2 = as3(V, T(j, (k + 2) % 3)) - pk;
            // |e1 x e2| = 2 * area, with the floored area.
            w[k] = clamp_cotan(0.5 * e1.dot(e2) / (2.0 * measure));
        }
        return w;
    }
    static const std::array<std::array<int, 2>, 6> opposite = {
        {{2, 3}, {1, 3}, {1, 2}, {0, 3}, {0, 2}, {0, 1}}};
    const auto edges = element_local_edges(MeshKind::tet);
    Eigen::VectorXd w(6);
    for (int k = 0; k < 6; ++k) {
        const Eigen::Vector3d pa = as3(V, T(j, edges[k][0]));
        const Eigen::Vector3d pb = as3(V, T(j, edges[k][1]));
        const Eigen::Vector3d pc = as3(V, T(j, opposite[k][0]));
        const Eigen::Vector3d pd = as3(V, T(j, opposite[k][1]));
        const Eigen::Vector3d e = pd - pc;
        const Eigen::Vector3d n1 = e.cross(pa - pc);
        const Eigen::Vector3d n2 = e.cross(pb - pc);
        // l/6 * cot(dihedral) = (n1 . n2) / (36 vol)
        w[k] = clamp_cotan(n1.dot(n2) / (36.0 * measure));
    }
    return w;
}

Eigen::MatrixXd element_diff_op(const Eigen::MatrixXd& V, const Eigen::MatrixXi& T,
                                Eigen::Index j, int dim)
{
    const int embed = static_cast<int>(V.cols());
    Eigen::MatrixXd E(embed, dim);
    for (int k = 0; k < dim; ++k) E.col(k) = (V.row(T(j, k + 1)) - V.row(T(j, 0))).transpose();

    Eigen::MatrixXd local;
    if (dim == embed) {
        local = E;
    } else {
        // Orthonormal tangent frame by Gram-Schmidt on the rest edges.
        Eigen::MatrixXd frame = Eigen::MatrixXd::Zero(embed, dim);
        for (int k = 0; k < dim; ++k) {
            Eigen::VectorXd t = E.col(k);
            for (int q = 0; q < k; ++q) t -= frame.col(q).dot(t) * frame.col(q);
            const double n = t.norm();
            if (n > 0) frame.col(k) = t / n;
        }
        local = frame.transpose() * E;
    }
    const Eigen::MatrixXd B = local.completeOrthogonalDecomposition().pseudoInverse();

    Eigen::MatrixXd G(dim, dim + 1);
    G.rightCols(dim) = B.transpose();
    G.col(0) = -B.transpose().rowwise().sum();
    return G;
}

} // namespace

std::vector<std::array<int, 2>> element_local_edges(MeshKind kind)
{
    switch (kind) {
    case MeshKind::polyline: return {{0, 1}};
    case MeshKind::triangle: return {{1, 2}, {2, 0}, {0, 1}};
    case MeshKind::tet: return {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    }
    return {};
}

const std::vector<std::array<int, 2>>& RestMesh::element_edges() const
{
    static const auto polyline = element_local_edges(MeshKind::polyline);
    static const auto triangle = element_local_edges(MeshKind::triangle);
    static const auto tet = element_local_edges(MeshKind::tet);
    switch (m_kind) {
    case MeshKind::polyline: return polyline;
    case MeshKind::triangle: return triangle;
    case MeshKind::tet: break;
    }
    return tet;
}

SmallMat RestMesh::deformation_gradient(const Eigen::MatrixXd& V, Eigen::Index j) const
{
    const Eigen::MatrixXd& G = m_diff_ops[static_cast<size_t>(j)];
    SmallMat F = SmallMat::Zero(m_embed, m_dim);
    for (int k = 0; k <= m_dim; ++k) {
        F.noalias() += V.row(m_elements(j, k)).transpose() * G.col(k).transpose();
    }
    return F;
}

RestMesh build_rest_mesh(Eigen::MatrixXd vertices, Eigen::MatrixXi elements, MeshKind kind)
{
    const int dim = kind_dim(kind);
    if (vertices.rows() == 0 || elements.rows() == 0) fail(ErrorCode::EmptyMesh, "mesh has no vertices or no elements");
    const int embed = static_cast<int>(vertices.cols());
    if (embed < 2 || embed > 3 || embed < dim) {
        fail(ErrorCode::InvalidArgument, "unsupported embedding dimension " + std::to_string(embed));
    }
    if (elements.cols() != dim + 1) {
        fail(ErrorCode::InvalidArgument, "element arity " + std::to_string(elements.cols()) + " does not match mesh kind");
    }
    if (!vertices.allFinite()) fail(ErrorCode::NonFinite, "non-finite vertex coordinate");
    const Eigen::Index n = vertices.rows();
    for (Eigen::Index j = 0; j < elements.rows(); ++j) {
        for (Eigen::Index k = 0; k < elements.cols(); ++k) {
            if (elements(j, k) < 0 || elements(j, k) >= n) {
                fail(ErrorCode::IndexOutOfRange, "element " + std::to_string(j) + " references vertex " +
                                                     std::to_string(elements(j, k)));
            }
        }
    }

    RestMesh mesh;
    mesh.m_kind = kind;
    mesh.m_dim = dim;
    mesh.m_embed = embed;
    mesh.m_bbox_diagonal = (vertices.colwise().maxCoeff() - vertices.colwise().minCoeff()).norm();
    mesh.m_measure_floor = kMeasureFloorFraction * std::pow(mesh.m_bbox_diagonal, dim);

    const Eigen::Index m = elements.rows();
    const auto local_edges = element_local_edges(kind);
    mesh.m_element_volumes.resize(m);
    mesh.m_element_edge_weights.resize(m, static_cast<Eigen::Index>(local_edges.size()));
    mesh.m_diff_ops.reserve(static_cast<size_t>(m));
    mesh.m_vertex_areas = Eigen::VectorXd::Zero(n);

    Eigen::Index degenerate = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
        double measure = raw_measure(vertices, elements, j, dim);
        if (!(measure >= mesh.m_measure_floor) || measure == 0.0) {
            ++degenerate;
            measure = std::max(mesh.m_measure_floor, std::numeric_limits<double>::min());
        }
        mesh.m_element_volumes[j] = measure;
        mesh.m_element_edge_weights.row(j) =
            element_cotan_weights(vertices, elements, j, dim, measure).transpose();
        mesh.m_diff_ops.push_back(element_diff_op(vertices, elements, j, dim));
        for (int k = 0; k <= dim; ++k) mesh.m_vertex_areas[elements(j, k)] += measure / (dim + 1);
    }
    if (degenerate == m) fail(ErrorCode::AllElementsDegenerate, "every element has zero measure");
    mesh.m_total_measure = mesh.m_element_volumes.sum();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (mesh.m_vertex_areas[i] <= 0.0) mesh.m_vertex_areas[i] = std::max(mesh.m_measure_floor, std::numeric_limits<double>::min());
    }

    // Spokes and rims: every edge of every element incident to the vertex.
    std::vector<std::vector<Eigen::Index>> incident(static_cast<size_t>(n));
    for (Eigen::Index j = 0; j < m; ++j) {
        for (int k = 0; k <= dim; ++k) incident[static_cast<size_t>(elements(j, k))].push_back(j);
    }
    struct Entry
    {
        int a;
        int b;
        double w;
    };
    mesh.m_patches.resize(static_cast<size_t>(n));
    std::vector<Entry> entries;
    for (Eigen::Index i = 0; i < n; ++i) {
        entries.clear();
        for (Eigen::Index j : incident[static_cast<size_t>(i)]) {
            for (size_t e = 0; e < local_edges.size(); ++e) {
                int a = elements(j, local_edges[e][0]);
                int b = elements(j, local_edges[e][1]);
                if (a > b) std::swap(a, b);
                entries.push_back({a, b, mesh.m_element_edge_weights(j, static_cast<Eigen::Index>(e))});
            }
        }
        std::sort(entries.begin(), entries.end(),
                  [](const Entry& x, const Entry& y) { return x.a != y.a ? x.a < y.a : x.b < y.b; });
        VertexPatch& patch = mesh.m_patches[static_cast<size_t>(i)];
        std::vector<double> weights;
        for (const Entry& entry : entries) {
            if (!patch.edges.empty() && patch.edges.back()[0] == entry.a && patch.edges.back()[1] == entry.b) {
                weights.back() += entry.w;
            } else {
                patch.edges.push_back({entry.a, entry.b});
                weights.push_back(entry.w);
            }
        }
        patch.weights = Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
        patch.rest_edges.resize(embed, static_cast<Eigen::Index>(patch.edges.size()));
        for (size_t k = 0; k < patch.edges.size(); ++k) {
            patch.rest_edges.col(static_cast<Eigen::Index>(k)) =
                (vertices.row(patch.edges[k][1]) - vertices.row(patch.edges[k][0])).transpose();
        }
    }

    mesh.m_vertices = std::move(vertices);
    mesh.m_elements = std::move(elements);
    return mesh;
}

SmallMatrixFactors svd_small(const SmallMat& M, bool rotation_variant)
{
    if (M.rows() != M.cols() || M.rows() < 1 || M.rows() > 3) {
        fail(ErrorCode::InvalidArgument, "svd_small expects a square matrix of size 1..3");
    }
    if (!M.allFinite()) fail(ErrorCode::NonFinite, "svd_small input is not finite");
    Eigen::JacobiSVD<SmallMat> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    SmallMatrixFactors out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
    if (rotation_variant && out.u.determinant() * out.v.determinant() < 0.0) {
        const Eigen::Index last = M.rows() - 1;
        out.u.col(last) *= -1.0;
        out.sigma[last] *= -1.0;
    }
    return out;
}

SmallMat polar_sym(const SmallMat& F)
{
    if (!F.allFinite()) fail(ErrorCode::NonFinite, "polar_sym input is not finite");
    Eigen::JacobiSVD<SmallMat> svd(F, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const SmallMat& V = svd.matrixV();
    return V * svd.singularValues().asDiagonal() * V.transpose();
}

SmallMat polar_rotation(const SmallMat& F)
{
    if (!F.allFinite()) fail(ErrorCode::NonFinite, "polar_rotation input is not finite");
    Eigen::JacobiSVD<SmallMat> svd(F, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return svd.matrixU() * svd.matrixV().transpose();
}

DisplacementStats displacement_stats(const Eigen::MatrixXd& V, const RestMesh& mesh, double threshold)
{
    if (V.rows() != mesh.num_vertices() || V.cols() != mesh.embed()) {
        fail(ErrorCode::ShapeMismatch, "deformed positions do not match the rest mesh");
    }
    DisplacementStats stats;
    stats.magnitudes = (V - mesh.vertices()).rowwise().norm();
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        if (stats.magnitudes[i] > threshold) {
            ++stats.roi_count;
            stats.roi_measure += mesh.vertex_areas()[i];
        }
    }
    return stats;
}

} // namespace localdeform
