#include "test_support.hpp"

#include <localdeform/errors.hpp>
#include <localdeform/geometry.hpp>
#include <localdeform/shapes.hpp>

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <random>

using namespace localdeform;
using test_support::random_rotation;

namespace {

RestMesh equilateral()
{
    Eigen::MatrixXd V(3, 2);
    V << 0, 0, 1, 0, 0.5, std::sqrt(3.0) / 2;
    Eigen::MatrixXi F(1, 3);
    F << 0, 1, 2;
    return build_rest_mesh(V, F, MeshKind::triangle);
}

RestMesh regular_tet()
{
    Eigen::MatrixXd V(4, 3);
    V << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
    Eigen::MatrixXi T(1, 4);
    T << 0, 1, 2, 3;
    return build_rest_mesh(V, T, MeshKind::tet);
}

} // namespace

TEST_CASE("equilateral triangle weights and areas")
{
    const RestMesh mesh = equilateral();
    const double expected_w = 0.5 / std::tan(M_PI / 3.0);
    CHECK(expected_w == doctest::Approx(0.288675).epsilon(1e-6));
    for (int e = 0; e < 3; ++e) CHECK(mesh.element_edge_weights()(0, e) == doctest::Approx(expected_w).epsilon(1e-12));
    const double area = std::sqrt(3.0) / 4.0;
    for (int i = 0; i < 3; ++i) CHECK(mesh.vertex_areas()[i] == doctest::Approx(area / 3.0).epsilon(1e-12));
    CHECK(mesh.vertex_areas().sum() == doctest::Approx(area).epsilon(1e-12));
    CHECK(mesh.dim() == 2);
    CHECK(mesh.embed() == 2);
}

TEST_CASE("spokes and rims patch of a single triangle holds all three edges")
{
    const RestMesh mesh = equilateral();
    for (const VertexPatch& p : mesh.patches()) {
        CHECK(p.edges.size() == 3);
        CHECK(p.rest_edges.cols() == 3);
        for (size_t k = 0; k < p.edges.size(); ++k) {
            const Eigen::VectorXd d = mesh.vertices().row(p.edges[k][1]) - mesh.vertices().row(p.edges[k][0]);
            CHECK((d - p.rest_edges.col(static_cast<Eigen::Index>(k))).norm() == 0.0);
        }
    }
}

TEST_CASE("collinear polyline has uniform weights and half-length areas")
{
    Eigen::MatrixXd V(3, 2);
    V << 0, 0, 1, 0, 3, 0;
    Eigen::MatrixXi E(2, 2);
    E << 0, 1, 1, 2;
    const RestMesh mesh = build_rest_mesh(V, E, MeshKind::polyline);
    CHECK(mesh.dim() == 1);
    CHECK(mesh.vertex_areas()[0] == doctest::Approx(0.5));
    CHECK(mesh.vertex_areas()[1] == doctest::Approx(1.5));
    CHECK(mesh.vertex_areas()[2] == doctest::Approx(1.0));
    for (const VertexPatch& p : mesh.patches()) {
        for (Eigen::Index k = 0; k < p.weights.size(); ++k) CHECK(p.weights[k] == 1.0);
    }
}

TEST_CASE("regular tetrahedron areas partition its volume")
{
    const RestMesh mesh = regular_tet();
    const double volume = 8.0 / 3.0;
    CHECK(mesh.element_volumes()[0] == doctest::Approx(volume).epsilon(1e-12));
    CHECK(mesh.vertex_areas().sum() == doctest::Approx(volume).epsilon(1e-12));
    // Edge weight l/6 cot(dihedral); every dihedral of a regular tet has cos = 1/3.
    const double l = std::sqrt(8.0);
    const double cot_dihedral = (1.0 / 3.0) / std::sqrt(1.0 - 1.0 / 9.0);
    for (int e = 0; e < 6; ++e) {
        CHECK(mesh.element_edge_weights()(0, e) == doctest::Approx(l / 6.0 * cot_dihedral).epsilon(1e-12));
    }
}

TEST_CASE("construction errors")
{
    Eigen::MatrixXd V(3, 2);
    V << 0, 0, 1, 0, 0, 1;
    Eigen::MatrixXi F(1, 3);
    F << 0, 1, 2;
    SUBCASE("empty")
    {
        CHECK_THROWS_AS(build_rest_mesh(Eigen::MatrixXd(0, 2), Eigen::MatrixXi(0, 3), MeshKind::triangle), Error);
        try {
            build_rest_mesh(Eigen::MatrixXd(0, 2), Eigen::MatrixXi(0, 3), MeshKind::triangle);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyMesh);
        }
    }
    SUBCASE("index out of range")
    {
        Eigen::MatrixXi bad(1, 3);
        bad << 0, 1, 3;
        try {
            build_rest_mesh(V, bad, MeshKind::triangle);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::IndexOutOfRange);
        }
    }
    SUBCASE("all degenerate")
    {
        Eigen::MatrixXd flat(3, 2);
        flat << 0, 0, 1, 0, 2, 0;
        try {
            build_rest_mesh(flat, F, MeshKind::triangle);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::AllElementsDegenerate);
        }
    }
    SUBCASE("non-finite")
    {
        Eigen::MatrixXd nan = V;
        nan(1, 1) = std::nan("");
        try {
            build_rest_mesh(nan, F, MeshKind::triangle);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NonFinite);
        }
    }
}

TEST_CASE("degenerate element policy keeps weights finite and areas positive")
{
    Eigen::MatrixXd V(5, 2);
    V << 0, 0, 1, 0, 0, 1, 1, 1, 2, 0;
    Eigen::MatrixXi F(3, 3);
    F << 0, 1, 2, 1, 3, 2, 1, 4, 1; // last triangle has zero area
    const RestMesh mesh = build_rest_mesh(V, F, MeshKind::triangle);
    CHECK(mesh.element_edge_weights().allFinite());
    CHECK(mesh.element_edge_weights().cwiseAbs().maxCoeff() <= kCotanClamp);
    CHECK(mesh.element_volumes().minCoeff() >= mesh.measure_floor());
    CHECK(mesh.vertex_areas().minCoeff() > 0.0);
}

TEST_CASE("vertex areas sum to the total measure")
{
    for (const auto& data : {shapes::disk(1.0, 6), shapes::bar_2d(10, 3, 2.0, 0.5), shapes::bar_3d(4, 2, 2, 2.0, 1.0, 1.0),
                             shapes::cloth_grid(5, 1.0), shapes::polyline_arc(12, 3.0, 0.4)}) {
        const RestMesh mesh = build_rest_mesh(data.vertices, data.elements, data.kind);
        CHECK(mesh.vertex_areas().minCoeff() > 0.0);
        CHECK(std::abs(mesh.vertex_areas().sum() - mesh.total_measure()) <= 1e-10 * mesh.total_measure());
        CHECK(std::abs(mesh.element_volumes().sum() - mesh.total_measure()) <= 1e-10 * mesh.total_measure());
    }
}

TEST_CASE("difference operators annihilate constants and reproduce affine maps")
{
    std::mt19937 rng(7);
    std::normal_distribution<double> g;
    for (const auto& data : {shapes::disk(1.0, 3), shapes::bar_3d(2, 2, 2, 1.0, 1.0, 1.0)}) {
        const RestMesh mesh = build_rest_mesh(data.vertices, data.elements, data.kind);
        const int d = mesh.embed();
        Eigen::MatrixXd A(d, d);
        for (Eigen::Index k = 0; k < A.size(); ++k) A.data()[k] = g(rng);
        Eigen::VectorXd b(d);
        for (int k = 0; k < d; ++k) b[k] = g(rng);
        const Eigen::MatrixXd V = (mesh.vertices() * A.transpose()).rowwise() + b.transpose();
        const Eigen::MatrixXd C = Eigen::MatrixXd::Ones(mesh.num_vertices(), d) * 0.7;
        for (Eigen::Index j = 0; j < mesh.num_elements(); ++j) {
            CHECK((mesh.deformation_gradient(V, j) - A).cwiseAbs().maxCoeff() <= 1e-10);
            CHECK(mesh.deformation_gradient(C, j).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("surface and curve elements use an orthonormal rest frame")
{
    for (const auto& data : {shapes::cloth_grid(3, 1.0), shapes::polyline_arc(5, 2.0, 0.3)}) {
        const RestMesh mesh = build_rest_mesh(data.vertices, data.elements, data.kind);
        CHECK(mesh.dim() < mesh.embed());
        for (Eigen::Index j = 0; j < mesh.num_elements(); ++j) {
            const SmallMat F = mesh.deformation_gradient(mesh.vertices(), j);
            CHECK(F.rows() == mesh.embed());
            CHECK(F.cols() == mesh.dim());
            CHECK((F.transpose() * F - SmallMat::Identity(mesh.dim(), mesh.dim())).norm() <= 1e-12);
        }
    }
}

TEST_CASE("weights follow a vertex permutation")
{
    const shapes::MeshData data = shapes::disk(1.0, 4);
    const Eigen::Index n = data.vertices.rows();
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937(3));
    Eigen::MatrixXd V(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) V.row(perm[static_cast<size_t>(i)]) = data.vertices.row(i);
    Eigen::MatrixXi F = data.elements;
    for (Eigen::Index k = 0; k < F.size(); ++k) F.data()[k] = perm[static_cast<size_t>(F.data()[k])];
    const RestMesh a = build_rest_mesh(data.vertices, data.elements, data.kind);
    const RestMesh b = build_rest_mesh(V, F, data.kind);
    CHECK((a.element_edge_weights() - b.element_edge_weights()).cwiseAbs().maxCoeff() <= 1e-14);
    for (Eigen::Index i = 0; i < n; ++i) {
        CHECK(a.vertex_areas()[i] == doctest::Approx(b.vertex_areas()[perm[static_cast<size_t>(i)]]).epsilon(1e-14));
    }
}

TEST_CASE("construction is deterministic")
{
    const shapes::MeshData data = shapes::bar_3d(3, 2, 2, 1.5, 1.0, 1.0);
    const RestMesh a = build_rest_mesh(data.vertices, data.elements, data.kind);
    const RestMesh b = build_rest_mesh(data.vertices, data.elements, data.kind);
    CHECK(a.element_edge_weights() == b.element_edge_weights());
    CHECK(a.vertex_areas() == b.vertex_areas());
    for (size_t i = 0; i < a.patches().size(); ++i) CHECK(a.patches()[i].weights == b.patches()[i].weights);
}

TEST_CASE("svd_small examples")
{
    SUBCASE("identity")
    {
        const auto f = svd_small(SmallMat::Identity(3, 3), false);
        CHECK((f.sigma - SmallVec::Ones(3)).norm() <= 1e-15);
    }
    SUBCASE("reflection moves the sign into the last singular value")
    {
        SmallMat M(2, 2);
        M << 3, 0, 0, -1;
        const auto f = svd_small(M, true);
        CHECK(std::abs(f.sigma[0]) == doctest::Approx(3.0));
        CHECK(std::abs(f.sigma[1]) == doctest::Approx(1.0));
        CHECK((f.u * f.v.transpose()).determinant() == doctest::Approx(1.0));
        CHECK((f.u * f.sigma.asDiagonal() * f.v.transpose() - M).norm() <= 1e-12);
        const auto plain = svd_small(M, false);
        CHECK(plain.sigma[0] == doctest::Approx(3.0));
        CHECK(plain.sigma[1] == doctest::Approx(1.0));
    }
    SUBCASE("zero")
    {
        const auto f = svd_small(SmallMat::Zero(3, 3), true);
        CHECK(f.sigma.norm() == 0.0);
        CHECK((f.u.transpose() * f.u - SmallMat::Identity(3, 3)).norm() <= 1e-14);
        CHECK((f.v.transpose() * f.v - SmallMat::Identity(3, 3)).norm() <= 1e-14);
    }
    SUBCASE("non-finite")
    {
        SmallMat M = SmallMat::Identity(2, 2);
        M(0, 1) = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(svd_small(M, false), Error);
    }
}

TEST_CASE("svd_small invariants on random matrices")
{
    std::mt19937 rng(11);
    std::normal_distribution<double> g;
    for (int d = 1; d <= 3; ++d) {
        for (int trial = 0; trial < 200; ++trial) {
            SmallMat M(d, d);
            for (Eigen::Index k = 0; k < M.size(); ++k) M.data()[k] = g(rng);
            for (bool variant : {false, true}) {
                const auto f = svd_small(M, variant);
                CHECK((f.u * f.sigma.asDiagonal() * f.v.transpose() - M).norm() <= 1e-12 * std::max(1.0, M.norm()));
                for (int k = 0; k + 1 < d; ++k) CHECK(std::abs(f.sigma[k]) >= std::abs(f.sigma[k + 1]));
                if (variant) {
                    CHECK((f.u * f.v.transpose()).determinant() == doctest::Approx(1.0).epsilon(1e-10));
                    for (int k = 0; k + 1 < d; ++k) CHECK(f.sigma[k] >= 0.0);
                } else {
                    CHECK(f.sigma.minCoeff() >= 0.0);
                }
            }
        }
    }
}

TEST_CASE("polar_sym examples")
{
    CHECK((polar_sym(SmallMat::Identity(2, 2)) - SmallMat::Identity(2, 2)).norm() <= 1e-14);
    const double a = M_PI / 6.0;
    SmallMat R(2, 2);
    R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    CHECK((polar_sym(R) - SmallMat::Identity(2, 2)).norm() <= 1e-14);
    SmallMat R45(2, 2);
    R45 << std::cos(M_PI / 4), -std::sin(M_PI / 4), std::sin(M_PI / 4), std::cos(M_PI / 4);
    SmallMat D(2, 2);
    D << 2, 0, 0, 0.5;
    CHECK((polar_sym(R45 * D) - D).norm() <= 1e-12);
    CHECK((polar_rotation(R45 * D) - R45).norm() <= 1e-12);
}

TEST_CASE("polar_sym is invariant to rotations")
{
    std::mt19937 rng(5);
    std::normal_distribution<double> g;
    for (int d = 2; d <= 3; ++d) {
        for (int trial = 0; trial < 100; ++trial) {
            SmallMat F(d, d);
            for (Eigen::Index k = 0; k < F.size(); ++k) F.data()[k] = g(rng);
            const SmallMat Q = random_rotation(d, rng);
            const SmallMat S = polar_sym(F);
            CHECK((polar_sym(Q * F) - S).norm() <= 1e-10);
            CHECK((S - S.transpose()).norm() <= 1e-12);
            CHECK((polar_rotation(F) * S - F).norm() <= 1e-10);
        }
    }
    SUBCASE("tall F from a surface element")
    {
        SmallMat F(3, 2);
        F << 1, 0.2, 0.1, 1.3, -0.4, 0.5;
        const SmallMat R = polar_rotation(F);
        CHECK((R.transpose() * R - SmallMat::Identity(2, 2)).norm() <= 1e-12);
        CHECK((R * polar_sym(F) - F).norm() <= 1e-12);
    }
}

TEST_CASE("displacement statistics")
{
    const shapes::MeshData data = shapes::bar_2d(4, 2, 2.0, 1.0);
    const RestMesh mesh = build_rest_mesh(data.vertices, data.elements, data.kind);
    DisplacementStats rest = displacement_stats(mesh.vertices(), mesh);
    CHECK(rest.roi_count == 0);
    CHECK(rest.roi_measure == 0.0);
    Eigen::MatrixXd V = mesh.vertices();
    V(3, 1) += 1.0;
    const DisplacementStats moved = displacement_stats(V, mesh, 1e-3);
    CHECK(moved.roi_count == 1);
    CHECK(moved.roi_measure == doctest::Approx(mesh.vertex_areas()[3]));
    CHECK(moved.magnitudes[3] == doctest::Approx(1.0));
    // The threshold is strict.
    V = mesh.vertices();
    V(0, 0) += 1e-3;
    CHECK(displacement_stats(V, mesh, 1e-3).roi_count == 0);
    try {
        displacement_stats(Eigen::MatrixXd::Zero(2, 2), mesh);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
}
