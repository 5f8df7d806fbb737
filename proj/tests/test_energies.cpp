#include "oracles.hpp"
#include "test_support.hpp"

#include <localdeform/energies.hpp>
#include <localdeform/errors.hpp>
#include <localdeform/shapes.hpp>

#include <doctest.h>

#include <Eigen/Dense>

#include <map>
#include <random>

using namespace localdeform;
using test_support::random_rotation;

namespace {

Eigen::MatrixXd random_edges(int d, int k, std::mt19937& rng)
{
    std::normal_distribution<double> g;
    Eigen::MatrixXd D(d, k);
    for (Eigen::Index i = 0; i < D.size(); ++i) D.data()[i] = g(rng);
    return D;
}

Eigen::VectorXd random_weights(int k, std::mt19937& rng)
{
    std::uniform_real_distribution<double> u(0.1, 2.0);
    Eigen::VectorXd w(k);
    for (int i = 0; i < k; ++i) w[i] = u(rng);
    return w;
}

bool is_rotation(const SmallMat& R, double tol = 1e-8)
{
    const Eigen::Index d = R.rows();
    return (R.transpose() * R - SmallMat::Identity(d, d)).cwiseAbs().maxCoeff() <= tol &&
           std::abs(R.determinant() - 1.0) <= tol;
}

ErrorCode code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

double cot(const Eigen::Vector3d& a, const Eigen::Vector3d& b)
{
    return a.dot(b) / a.cross(b).norm();
}

// Per-edge isometric bending energy summed over interior edges, assembled
// stencil by stencil from its textbook definition.
double bending_stencil_energy(const RestMesh& mesh, const Eigen::MatrixXd& V)
{
    std::map<std::pair<int, int>, std::vector<std::pair<int, Eigen::Index>>> edge_faces;
    const Eigen::MatrixXi& F = mesh.elements();
    for (Eigen::Index f = 0; f < F.rows(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int a = F(f, (c + 1) % 3);
            const int b = F(f, (c + 2) % 3);
            edge_faces[{std::min(a, b), std::max(a, b)}].push_back({F(f, c), f});
        }
    }
    auto rest = [&](int i) {
        Eigen::Vector3d p = Eigen::Vector3d::Zero();
        p.head(mesh.embed()) = mesh.vertices().row(i).transpose();
        return p;
    };
    double energy = 0.0;
    for (const auto& [edge, faces] : edge_faces) {
        if (faces.size() != 2) continue;
        const Eigen::Vector3d x0 = rest(edge.first), x1 = rest(edge.second);
        const Eigen::Vector3d x2 = rest(faces[0].first), x3 = rest(faces[1].first);
        const Eigen::Vector3d e0 = x1 - x0, e1 = x2 - x0, e2 = x3 - x0, e3 = x2 - x1, e4 = x3 - x1;
        const double c01 = cot(e0, e1), c02 = cot(e0, e2), c03 = cot(-e0, e3), c04 = cot(-e0, e4);
        const double area = 0.5 * e0.cross(e1).norm() + 0.5 * e0.cross(e2).norm();
        const double k[4] = {c03 + c04, c01 + c02, -c01 - c03, -c02 - c04};
        const int ids[4] = {edge.first, edge.second, faces[0].first, faces[1].first};
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(V.cols());
        for (int i = 0; i < 4; ++i) sum += k[i] * V.row(ids[i]);
        energy += 0.5 * 3.0 / area * sum.squaredNorm();
    }
    return energy;
}

} // namespace

TEST_CASE("arap rotation fit examples")
{
    std::mt19937 rng(1);
    for (int d = 2; d <= 3; ++d) {
        const Eigen::MatrixXd Dr = random_edges(d, 6, rng);
        const Eigen::VectorXd w = random_weights(6, rng);
        CHECK((arap_fit_rotation(Dr, Dr, w) - SmallMat::Identity(d, d)).norm() <= 1e-10);
        const Eigen::MatrixXd Q = random_rotation(d, rng);
        const SmallMat R = arap_fit_rotation(Q * Dr, Dr, w);
        CHECK(is_rotation(R));
        CHECK((R - Q.transpose()).norm() <= 1e-10);
        CHECK(arap_patch_energy(Q * Dr, Dr, w, R) <= 1e-20);
    }
    SUBCASE("reflected input still yields a proper rotation")
    {
        const Eigen::MatrixXd Dr = random_edges(2, 5, rng);
        Eigen::MatrixXd flip = Dr;
        flip.row(1) *= -1.0;
        const Eigen::VectorXd w = random_weights(5, rng);
        const SmallMat R = arap_fit_rotation(flip, Dr, w);
        CHECK(is_rotation(R));
        CHECK(oracles::procrustes_objective(R, flip, Dr, w) <= oracles::procrustes_grid_2d(flip, Dr, w) + 1e-6);
    }
    SUBCASE("zero covariance gives the identity")
    {
        const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(3, 4);
        CHECK((arap_fit_rotation(Z, Z, Eigen::VectorXd::Ones(4)) - SmallMat::Identity(3, 3)).norm() == 0.0);
    }
}

TEST_CASE("arap rotation fit matches brute-force oracles")
{
    std::mt19937 rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const int d = 2 + trial % 2;
        const Eigen::MatrixXd D = random_edges(d, 5, rng);
        const Eigen::MatrixXd Dr = random_edges(d, 5, rng);
        const Eigen::VectorXd w = random_weights(5, rng);
        const SmallMat R = arap_fit_rotation(D, Dr, w);
        CHECK(is_rotation(R));
        const double f = oracles::procrustes_objective(R, D, Dr, w);
        const double oracle = d == 2 ? oracles::procrustes_grid_2d(D, Dr, w) : oracles::procrustes_restarts_3d(D, Dr, w, rng);
        CHECK(f <= oracle + 1e-6);
    }
}

TEST_CASE("arap local step never increases the patch energy")
{
    std::mt19937 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 2 + trial % 2;
        const Eigen::MatrixXd D = random_edges(d, 6, rng);
        const Eigen::MatrixXd Dr = random_edges(d, 6, rng);
        const Eigen::VectorXd w = random_weights(6, rng);
        const SmallMat before = random_rotation(d, rng);
        const SmallMat after = arap_fit_rotation(D, Dr, w);
        CHECK(arap_patch_energy(D, Dr, w, after) <= arap_patch_energy(D, Dr, w, before) + 1e-12);
    }
}

TEST_CASE("acap rotation and scale")
{
    std::mt19937 rng(3);
    const Eigen::MatrixXd Dr = random_edges(2, 6, rng);
    const Eigen::VectorXd w = random_weights(6, rng);
    SUBCASE("pure scaling")
    {
        const RotationScale rs = acap_fit_rotation_scale(2.0 * Dr, Dr, w);
        CHECK((rs.rotation - SmallMat::Identity(2, 2)).norm() <= 1e-10);
        CHECK(rs.scale == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("pure rotation")
    {
        const Eigen::MatrixXd Q = random_rotation(2, rng);
        const RotationScale rs = acap_fit_rotation_scale(Q * Dr, Dr, w);
        CHECK(rs.scale == doctest::Approx(1.0).epsilon(1e-12));
        CHECK((rs.rotation - Q).norm() <= 1e-10);
    }
    SUBCASE("clamp")
    {
        CHECK(acap_fit_rotation_scale(50.0 * Dr, Dr, w).scale == 10.0);
        CHECK(acap_fit_rotation_scale(0.01 * Dr, Dr, w).scale == 0.1);
    }
    SUBCASE("zero rest patch")
    {
        CHECK(code_of([&] { acap_fit_rotation_scale(Dr, Eigen::MatrixXd::Zero(2, 6), w); }) == ErrorCode::ZeroRestPatch);
    }
}

TEST_CASE("acap fit against an angle and scale grid")
{
    std::mt19937 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd D = random_edges(2, 5, rng);
        const Eigen::MatrixXd Dr = random_edges(2, 5, rng);
        const Eigen::VectorXd w = random_weights(5, rng);
        auto objective = [&](const Eigen::MatrixXd& R, double s) {
            return 0.5 * ((s * R * Dr - D).colwise().squaredNorm().transpose().array() * w.array()).sum();
        };
        const RotationScale rs = acap_fit_rotation_scale(D, Dr, w);
        double best = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 720; ++a) {
            const Eigen::Matrix2d R = oracles::rotation2(2.0 * M_PI * a / 720);
            for (int k = 0; k <= 400; ++k) best = std::min(best, objective(R, 0.1 + (10.0 - 0.1) * k / 400.0));
        }
        CHECK(objective(rs.rotation, rs.scale) <= best + 1e-4);
        if (rs.scale > 0.1 && rs.scale < 10.0) {
            // Normal equation of the scale.
            const double residual =
                ((rs.scale * rs.rotation * Dr - D).cwiseProduct(rs.rotation * Dr) * w.asDiagonal()).sum();
            CHECK(std::abs(residual) <= 1e-10);
        }
    }
}

TEST_CASE("neo-hookean energy")
{
    CHECK(nh_energy_sigma(SmallVec::Ones(3), 1.0, 1.0) == 0.0);
    SmallVec s(3);
    s << 2, 1, 1;
    CHECK(nh_energy_sigma(s, 1.0, 0.0) == doctest::Approx(1.5 - std::log(2.0)).epsilon(1e-14));
    CHECK(nh_energy_sigma(s, 1.0, 0.0) == doctest::Approx(0.8069).epsilon(1e-4));
    CHECK(nh_energy_sigma_gradient(SmallVec::Ones(3), 2.0, 5.0).norm() <= 1e-15);
    SmallVec bad(2);
    bad << 1.0, -0.5;
    CHECK(code_of([&] { nh_energy_sigma(bad, 1.0, 1.0); }) == ErrorCode::NonpositiveSigma);

    std::mt19937 rng(2);
    std::uniform_real_distribution<double> u(0.4, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 2 + trial % 2;
        SmallVec x(d);
        for (int k = 0; k < d; ++k) x[k] = u(rng);
        const SmallVec g = nh_energy_sigma_gradient(x, 1.3, 4.0);
        for (int k = 0; k < d; ++k) {
            SmallVec xp = x, xm = x;
            xp[k] += 1e-6;
            xm[k] -= 1e-6;
            const double fd = (nh_energy_sigma(xp, 1.3, 4.0) - nh_energy_sigma(xm, 1.3, 4.0)) / 2e-6;
            CHECK(g[k] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("neo-hookean prox")
{
    SUBCASE("rest is a fixed point")
    {
        const SigmaProxResult r = nh_prox_singular_values(SmallVec::Ones(3), 1.0, 1.0, 1.0, 1.0);
        CHECK(r.converged);
        CHECK((r.sigma - SmallVec::Ones(3)).norm() <= 1e-12);
    }
    SUBCASE("large penalty keeps the input")
    {
        SmallVec in(3);
        in << 1.2, 1.0, 1.0;
        CHECK((nh_prox_singular_values(in, 1e8, 1.0, 1.0, 1.0).sigma - in).norm() <= 1e-6);
    }
    SUBCASE("grid oracle")
    {
        SmallVec in(3);
        in << 1.5, 1.0, 1.0;
        const SigmaProxResult r = nh_prox_singular_values(in, 1.0, 1.0, 1.0, 1.0);
        CHECK(r.converged);
        const Eigen::Vector3d oracle = oracles::nh_prox_grid_3d(Eigen::Vector3d(1.5, 1.0, 1.0), 1.0, 1.0, 1.0, 1.0);
        CHECK((Eigen::Vector3d(r.sigma) - oracle).cwiseAbs().maxCoeff() <= 1e-5);
    }
    SUBCASE("prox beats the input and the rest state")
    {
        std::mt19937 rng(13);
        std::uniform_real_distribution<double> u(-0.5, 2.5);
        for (int trial = 0; trial < 200; ++trial) {
            const int d = 2 + trial % 2;
            SmallVec in(d);
            for (int k = 0; k < d; ++k) in[k] = u(rng);
            const double gamma = 0.1 + 5.0 * std::abs(u(rng));
            const SigmaProxResult r = nh_prox_singular_values(in, gamma, 1.0, 10.0, 0.7);
            CHECK(r.converged);
            CHECK(r.sigma.minCoeff() >= kSigmaFloor);
            const double f = oracles::nh_prox_objective(r.sigma, in, gamma, 1.0, 10.0, 0.7);
            CHECK(f <= oracles::nh_prox_objective(SmallVec::Ones(d), in, gamma, 1.0, 10.0, 0.7) + 1e-12);
            if (in.minCoeff() > 0.0) CHECK(f <= oracles::nh_prox_objective(in, in, gamma, 1.0, 10.0, 0.7) + 1e-12);
        }
    }
}

TEST_CASE("bending matrix")
{
    const auto mesh = test_support::make_mesh(shapes::cloth_grid(5, 1.0));
    const Eigen::SparseMatrix<double> Q = bending_matrix(*mesh);
    const Eigen::MatrixXd Qd(Q);
    CHECK((Qd - Qd.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((Qd * Eigen::VectorXd::Ones(Qd.rows())).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((Qd * mesh->vertices()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(0.5 * (mesh->vertices().transpose() * Qd * mesh->vertices()).trace() == doctest::Approx(0.0).epsilon(1e-12));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Qd);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-9 * eig.eigenvalues().cwiseAbs().maxCoeff());

    std::mt19937 rng(4);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXd V = mesh->vertices();
        for (Eigen::Index k = 0; k < V.size(); ++k) V.data()[k] += 0.1 * g(rng);
        const double energy = 0.5 * (V.transpose() * Qd * V).trace();
        CHECK(energy >= 0.0);
        CHECK(std::abs(energy - bending_stencil_energy(*mesh, V)) <= 1e-10 * std::max(1.0, energy));
    }
}

TEST_CASE("bending matrix rejects non-manifold edges")
{
    Eigen::MatrixXd V(5, 3);
    V << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1;
    Eigen::MatrixXi F(3, 3);
    F << 0, 1, 2, 1, 0, 3, 0, 1, 4;
    const RestMesh mesh = build_rest_mesh(V, F, MeshKind::triangle);
    CHECK(code_of([&] { bending_matrix(mesh); }) == ErrorCode::NonManifoldEdge);
}

TEST_CASE("strain limit projection")
{
    Eigen::MatrixXd Dr(3, 3);
    Dr << 1, 0, 0.5, 0, 1, 0.5, 0, 0, 0.5;
    SUBCASE("within limits")
    {
        const Eigen::MatrixXd D = 1.05 * Dr;
        CHECK((strain_limit_project(D, Dr, 0.1) - D).norm() <= 1e-15);
    }
    SUBCASE("stretched edges are clamped")
    {
        const Eigen::MatrixXd out = strain_limit_project(2.0 * Dr, Dr, 0.1);
        for (int k = 0; k < 3; ++k) CHECK(out.col(k).norm() == doctest::Approx(1.1 * Dr.col(k).norm()).epsilon(1e-14));
        CHECK((out - 1.1 * Dr).norm() <= 1e-14);
    }
    SUBCASE("random batch stays inside the band")
    {
        std::mt19937 rng(8);
        for (int trial = 0; trial < 100; ++trial) {
            const Eigen::MatrixXd R = random_edges(3, 4, rng);
            const Eigen::MatrixXd D = random_edges(3, 4, rng);
            const double eps = 0.05 + 0.4 * (trial % 10) / 10.0;
            const Eigen::MatrixXd out = strain_limit_project(D, R, eps);
            for (int k = 0; k < 4; ++k) {
                const double strain = out.col(k).norm() / R.col(k).norm() - 1.0;
                CHECK(std::abs(strain) <= eps + 1e-12);
                CHECK(out.col(k).normalized().dot(D.col(k).normalized()) == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("material validation")
{
    const auto tri = test_support::make_mesh(shapes::disk(1.0, 2));
    const auto line = test_support::make_mesh(shapes::polyline_arc(4, 1.0, 0.1));
    const auto cloth = test_support::make_mesh(shapes::cloth_grid(2, 1.0));
    CHECK_NOTHROW(validate_material(Arap{}, *tri));
    CHECK_NOTHROW(validate_material(NeoHookean{1.0, 10.0}, *tri));
    CHECK(code_of([&] { validate_material(NeoHookean{0.0, 1.0}, *tri); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { validate_material(NeoHookean{1.0, 1.0}, *cloth); }) == ErrorCode::UnsupportedFeature);
    CHECK(code_of([&] { validate_material(PolylineArap{}, *tri); }) == ErrorCode::UnsupportedFeature);
    CHECK(code_of([&] { validate_material(ClothArap{0.0, 0.7, 1.0}, *cloth); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { validate_material(Acap{}, *line); }) == ErrorCode::UnsupportedFeature);
    CHECK_NOTHROW(validate_material(PolylineArap{}, *line));
    CHECK(is_patch_material(Arap{}));
    CHECK_FALSE(is_patch_material(NeoHookean{}));
}
