#pragma once

#include <array>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace localdeform {

// Small dense types with a compile-time upper bound of 3, so per-vertex and
// per-element kernels never touch the heap.
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;

enum class MeshKind { polyline, triangle, tet };

/// Spokes-and-rims neighbourhood of one vertex.
///
/// Edge k runs from `edges[k][0]` to `edges[k][1]`; its rest vector
/// `rest_edges.col(k)` is the difference of those two rest positions.
struct VertexPatch
{
    std::vector<std::array<int, 2>> edges;
    Eigen::VectorXd weights;
    Eigen::MatrixXd rest_edges; // embed x |N(i)|
};

/// Immutable discretisation of the rest shape.
///
/// Built once by build_rest_mesh(); every accessor is const and the object can
/// be shared freely between readers.
class RestMesh
{
public:
    MeshKind kind() const { return m_kind; }
    int dim() const { return m_dim; }
    int embed() const { return m_embed; }

    Eigen::Index num_vertices() const { return m_vertices.rows(); }
    Eigen::Index num_elements() const { return m_elements.rows(); }

    const Eigen::MatrixXd& vertices() const { return m_vertices; }
    const Eigen::MatrixXi& elements() const { return m_elements; }

    const std::vector<VertexPatch>& patches() const { return m_patches; }
    const Eigen::VectorXd& vertex_areas() const { return m_vertex_areas; }
    const Eigen::VectorXd& element_volumes() const { return m_element_volumes; }

    /// Per-element cotangent weights, one column per local edge (see element_edges()).
    const Eigen::MatrixXd& element_edge_weights() const { return m_element_edge_weights; }

    /// Per-element gradient operator G (dim x (dim+1)); F^T = G * V_elem.
    const std::vector<Eigen::MatrixXd>& diff_ops() const { return m_diff_ops; }

    double bbox_diagonal() const { return m_bbox_diagonal; }
    double total_measure() const { return m_total_measure; }
    double measure_floor() const { return m_measure_floor; }

    /// Deformation gradient (embed x dim) of element `j` for positions `V`.
    SmallMat deformation_gradient(const Eigen::MatrixXd& V, Eigen::Index j) const;

    /// Local vertex pairs of the edges of one element of this mesh's kind.
    const std::vector<std::array<int, 2>>& element_edges() const;

private:
    friend RestMesh build_rest_mesh(Eigen::MatrixXd, Eigen::MatrixXi, MeshKind);

    MeshKind m_kind = MeshKind::triangle;
    int m_dim = 2;
    int m_embed = 2;
    Eigen::MatrixXd m_vertices;
    Eigen::MatrixXi m_elements;
    std::vector<VertexPatch> m_patches;
    Eigen::VectorXd m_vertex_areas;
    Eigen::VectorXd m_element_volumes;
    Eigen::MatrixXd m_element_edge_weights;
    std::vector<Eigen::MatrixXd> m_diff_ops;
    double m_bbox_diagonal = 0.0;
    double m_total_measure = 0.0;
    double m_measure_floor = 0.0;
};

/// Clamp applied to cotangent weights of degenerate elements.
inline constexpr double kCotanClamp = 1e8;
/// Element measures are floored at this fraction of bbox_diagonal^dim.
inline constexpr double kMeasureFloorFraction = 1e-12;

/// Builds all derived rest quantities.
///
/// `vertices` is |V| x embed (embed 2 or 3). Elements are segments, triangles
/// or tetrahedra depending on `kind`. Throws EmptyMesh, IndexOutOfRange or
/// AllElementsDegenerate.
RestMesh build_rest_mesh(Eigen::MatrixXd vertices, Eigen::MatrixXi elements, MeshKind kind);

std::vector<std::array<int, 2>> element_local_edges(MeshKind kind);

struct SmallMatrixFactors
{
    SmallMat u;
    SmallVec sigma;
    SmallMat v;
};

/// SVD of a d x d matrix, d in {1,2,3}, with singular values sorted descending.
///
/// With `rotation_variant` the factors satisfy det(u * v^T) = +1; when
/// det(M) < 0 the sign is moved into the last singular value, so sigma is
/// sorted by magnitude and its last entry may be negative.
SmallMatrixFactors svd_small(const SmallMat& M, bool rotation_variant);

/// Symmetric factor S of the polar decomposition F = R S (F is embed x dim).
SmallMat polar_sym(const SmallMat& F);

/// Rotation-like factor R of F = R S, with orthonormal columns.
SmallMat polar_rotation(const SmallMat& F);

struct DisplacementStats
{
    Eigen::VectorXd magnitudes;
    Eigen::Index roi_count = 0;
    double roi_measure = 0.0;
};

/// Default region-of-influence threshold on vertex displacement.
inline constexpr double kRoiThreshold = 1e-3;

DisplacementStats displacement_stats(const Eigen::MatrixXd& V, const RestMesh& mesh,
                                     double threshold = kRoiThreshold);

} // namespace localdeform
