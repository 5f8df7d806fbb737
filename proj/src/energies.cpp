#include <localdeform/energies.hpp>
#include <localdeform/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <string>

namespace localdeform {

std::string_view material_name(const MaterialModel& material)
{
    struct Visitor
    {
        std::string_view operator()(const Arap&) const { return "arap"; }
        std::string_view operator()(const Acap&) const { return "acap"; }
        std::string_view operator()(const NeoHookean&) const { return "nh"; }
        std::string_view operator()(const ClothArap&) const { return "cloth"; }
        std::string_view operator()(const PolylineArap&) const { return "polyline"; }
    };
    return std::visit(Visitor{}, material);
}

bool is_patch_material(const MaterialModel& material)
{
    return !std::holds_alternative<NeoHookean>(material);
}

void validate_material(const MaterialModel& material, const RestMesh& mesh)
{
    if (const auto* nh = std::get_if<NeoHookean>(&material)) {
        if (!(nh->mu > 0.0) || !(nh->lambda >= 0.0)) {
            fail(ErrorCode::InvalidArgument, "Neo-Hookean needs mu > 0 and lambda >= 0");
        }
        if (mesh.dim() != mesh.embed() || mesh.dim() < 2) {
            fail(ErrorCode::UnsupportedFeature, "Neo-Hookean needs a planar triangle or a tet mesh");
        }
    } else if (const auto* cloth = std::get_if<ClothArap>(&material)) {
        if (!(cloth->bending_stiffness >= 0.0) || !(cloth->strain_stiffness >= 0.0)) {
            fail(ErrorCode::InvalidArgument, "cloth stiffnesses must be nonnegative");
        }
        if (!(cloth->strain_limit >= 0.0 && cloth->strain_limit <= 0.5)) {
            fail(ErrorCode::InvalidArgument, "cloth strain limit must lie in [0, 0.5]");
        }
        if (mesh.kind() != MeshKind::triangle) fail(ErrorCode::UnsupportedFeature, "cloth needs a triangle mesh");
    } else if (const auto* acap = std::get_if<Acap>(&material)) {
        if (!(acap->scale_min > 0.0 && acap->scale_min <= acap->scale_max)) {
            fail(ErrorCode::InvalidArgument, "ACAP scale bounds must satisfy 0 < min <= max");
        }
        if (mesh.kind() == MeshKind::polyline) fail(ErrorCode::UnsupportedFeature, "ACAP needs a triangle or tet mesh");
    } else if (std::holds_alternative<PolylineArap>(material)) {
        if (mesh.kind() != MeshKind::polyline) fail(ErrorCode::UnsupportedFeature, "polyline energy needs a polyline");
    }
}

SmallMat rotation_from_covariance(const SmallMat& M)
{
    const SmallMatrixFactors f = svd_small(M, true);
    return f.v * f.u.transpose();
}

SmallMat arap_fit_rotation(const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest,
                           const Eigen::VectorXd& weights)
{
    if (D.rows() != D_rest.rows() || D.cols() != D_rest.cols() || D.cols() != weights.size()) {
        fail(ErrorCode::ShapeMismatch, "edge matrices and weights disagree");
    }
    const SmallMat M = D * weights.asDiagonal() * D_rest.transpose();
    return rotation_from_covariance(M);
}

double arap_patch_energy(const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest,
                         const Eigen::VectorXd& weights, const SmallMat& R)
{
    const Eigen::MatrixXd diff = R * D - D_rest;
    return 0.5 * (diff.colwise().squaredNorm().transpose().array() * weights.array()).sum();
}

RotationScale acap_fit_rotation_scale(const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest,
                                      const Eigen::VectorXd& weights, double scale_min,
                                      double scale_max)
{
    if (D.rows() != D_rest.rows() || D.cols() != D_rest.cols() || D.cols() != weights.size()) {
        fail(ErrorCode::ShapeMismatch, "edge matrices and weights disagree");
    }
    const double denom = (D_rest.colwise().squaredNorm().transpose().array() * weights.array()).sum();
    if (!(denom > 0.0)) fail(ErrorCode::ZeroRestPatch, "rest patch has no weighted extent");
    // Rest-to-deformed rotation: transpose of the ARAP fit.
    const SmallMat M = D_rest * weights.asDiagonal() * D.transpose();
    RotationScale out;
    out.rotation = rotation_from_covariance(M);
    const Eigen::MatrixXd rotated = out.rotation * D_rest;
    const double numer = (rotated.cwiseProduct(D).colwise().sum().transpose().array() * weights.array()).sum();
    out.scale = std::clamp(numer / denom, scale_min, scale_max);
    return out;
}

double nh_energy_sigma(const SmallVec& sigma, double mu, double lambda)
{
    if ((sigma.array() <= 0.0).any()) fail(ErrorCode::NonpositiveSigma, "singular values must be positive");
    const double log_j = sigma.array().log().sum();
    const auto d = static_cast<double>(sigma.size());
    return 0.5 * mu * (sigma.squaredNorm() - d) - mu * log_j + 0.5 * lambda * log_j * log_j;
}

SmallVec nh_energy_sigma_gradient(const SmallVec& sigma, double mu, double lambda)
{
    if ((sigma.array() <= 0.0).any()) fail(ErrorCode::NonpositiveSigma, "singular values must be positive");
    const double log_j = sigma.array().log().sum();
    return (mu * sigma.array() + (lambda * log_j - mu) / sigma.array()).matrix();
}

namespace {

struct ProxObjective
{
    SmallVec sigma_in;
    double gamma;
    double mu;
    double lambda;
    double volume;

    double value(const SmallVec& x) const
    {
        return volume * nh_energy_sigma(x, mu, lambda) + 0.5 * gamma * (x - sigma_in).squaredNorm();
    }

    SmallVec gradient(const SmallVec& x) const
    {
        return volume * nh_energy_sigma_gradient(x, mu, lambda) + gamma * (x - sigma_in);
    }

    SmallMat hessian(const SmallVec& x) const
    {
        const double log_j = x.array().log().sum();
        const SmallVec inv = x.cwiseInverse();
        SmallMat H = volume * lambda * inv * inv.transpose();
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            H(i, i) += volume * (mu * (1.0 + inv[i] * inv[i]) - lambda * log_j * inv[i] * inv[i]) + gamma;
        }
        return H;
    }
};

// Largest step along p keeping every coordinate above the floor.
double feasible_step(const SmallVec& x, const SmallVec& p)
{
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (p[i] < 0.0) alpha = std::min(alpha, 0.5 * (x[i] - kSigmaFloor) / -p[i]);
    }
    return alpha;
}

} // namespace

SigmaProxResult nh_prox_singular_values(const SmallVec& sigma_in, double gamma, double mu,
                                        double lambda, double volume)
{
    if (!(gamma > 0.0)) fail(ErrorCode::InvalidArgument, "gamma must be positive");
    if (!sigma_in.allFinite()) fail(ErrorCode::NonFinite, "prox input is not finite");
    const ProxObjective f{sigma_in, gamma, mu, lambda, volume};
    constexpr double kTol = 1e-10;
    constexpr int kMaxIters = 200;
    constexpr size_t kMemory = 6;

    SigmaProxResult result;
    SmallVec x = sigma_in.cwiseMax(1e-2);
    double fx = f.value(x);
    SmallVec g = f.gradient(x);
    std::deque<std::pair<SmallVec, SmallVec>> history; // (s, y)

    for (int it = 0; it < kMaxIters; ++it) {
        result.iterations = it;
        if (g.lpNorm<Eigen::Infinity>() <= kTol) {
            result.converged = true;
            break;
        }
        // Two-loop recursion.
        SmallVec q = g;
        std::vector<double> alphas(history.size());
        for (size_t k = history.size(); k-- > 0;) {
            const auto& [s, y] = history[k];
            alphas[k] = s.dot(q) / y.dot(s);
            q -= alphas[k] * y;
        }
        if (!history.empty()) {
            const auto& [s, y] = history.back();
            q *= s.dot(y) / y.squaredNorm();
        } else {
            q /= std::max(1.0, g.lpNorm<Eigen::Infinity>());
        }
        for (size_t k = 0; k < history.size(); ++k) {
            const auto& [s, y] = history[k];
            const double beta = y.dot(q) / y.dot(s);
            q += (alphas[k] - beta) * s;
        }
        SmallVec p = -q;
        if (p.dot(g) >= 0.0) {
            history.clear();
            p = -g / std::max(1.0, g.lpNorm<Eigen::Infinity>());
        }

        double alpha = feasible_step(x, p);
        const double slope = g.dot(p);
        bool accepted = false;
        SmallVec x_new;
        double f_new = fx;
        SmallVec g_new;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + alpha * p;
            f_new = f.value(x_new);
            // The relative slack keeps the search alive once f stops resolving.
            if (f_new <= fx + 1e-4 * alpha * slope + 1e-14 * std::abs(fx)) {
                g_new = f.gradient(x_new);
                if (f_new < fx || g_new.squaredNorm() < g.squaredNorm()) {
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!accepted) break;

        const SmallVec s = x_new - x;
        const SmallVec y = g_new - g;
        if (s.dot(y) > 1e-300) {
            history.emplace_back(s, y);
            if (history.size() > kMemory) history.pop_front();
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    // Newton polish when the quasi-Newton loop stalls short of the tolerance.
    for (int it = 0; !result.converged && it < 50; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= kTol) {
            result.converged = true;
            break;
        }
        const SmallMat H = f.hessian(x);
        Eigen::LLT<SmallMat> llt(H);
        SmallVec p = (llt.info() == Eigen::Success) ? SmallVec(llt.solve(-g)) : SmallVec(-g);
        double alpha = feasible_step(x, p);
        SmallVec x_new = x + alpha * p;
        SmallVec g_new = f.gradient(x_new);
        int ls = 0;
        while (g_new.squaredNorm() >= g.squaredNorm() && f.value(x_new) > fx && ls++ < 60) {
            alpha *= 0.5;
            x_new = x + alpha * p;
            g_new = f.gradient(x_new);
        }
        if (ls >= 60) break;
        x = x_new;
        fx = f.value(x);
        g = g_new;
        ++result.iterations;
    }
    if (!result.converged && g.lpNorm<Eigen::Infinity>() <= kTol) result.converged = true;
    result.sigma = x;
    return result;
}

Eigen::SparseMatrix<double> bending_matrix(const RestMesh& mesh)
{
    if (mesh.kind() != MeshKind::triangle) fail(ErrorCode::UnsupportedFeature, "bending needs a triangle mesh");
    const Eigen::MatrixXi& T = mesh.elements();
    const Eigen::MatrixXd& V = mesh.vertices();
    // Undirected edge -> (triangle, opposite local corner) list.
    std::map<std::pair<int, int>, std::vector<std::pair<Eigen::Index, int>>> edge_faces;
    for (Eigen::Index j = 0; j < T.rows(); ++j) {
        for (int k = 0; k < 3; ++k) {
            int a = T(j, (k + 1) % 3);
            int b = T(j, (k + 2) % 3);
            if (a > b) std::swap(a, b);
            edge_faces[{a, b}].emplace_back(j, k);
        }
    }
    auto cot_at = [&](int apex, int p, int q) {
        const Eigen::Vector3d o = [&] { Eigen::Vector3d v = Eigen::Vector3d::Zero(); v.head(V.cols()) = V.row(apex).transpose(); return v; }();
        Eigen::Vector3d e1 = Eigen::Vector3d::Zero();
        Eigen::Vector3d e2 = Eigen::Vector3d::Zero();
        e1.head(V.cols()) = V.row(p).transpose();
        e2.head(V.cols()) = V.row(q).transpose();
        e1 -= o;
        e2 -= o;
        const double cross = std::max(e1.cross(e2).norm(), mesh.measure_floor());
        return std::clamp(e1.dot(e2) / cross, -kCotanClamp, kCotanClamp);
    };

    std::vector<Eigen::Triplet<double>> triplets;
    for (const auto& [edge, faces] : edge_faces) {
        if (faces.size() > 2) {
            fail(ErrorCode::NonManifoldEdge,
                 "edge (" + std::to_string(edge.first) + ", " + std::to_string(edge.second) + ") has more than two faces");
        }
        if (faces.size() < 2) continue;
        const int x0 = edge.first;
        const int x1 = edge.second;
        const int x2 = T(faces[0].first, faces[0].second);
        const int x3 = T(faces[1].first, faces[1].second);
        const double c01 = cot_at(x0, x1, x2);
        const double c03 = cot_at(x1, x0, x2);
        const double c02 = cot_at(x0, x1, x3);
        const double c04 = cot_at(x1, x0, x3);
        const std::array<int, 4> ids{x0, x1, x2, x3};
        const std::array<double, 4> k{c03 + c04, c01 + c02, -c01 - c03, -c02 - c04};
        const double area = mesh.element_volumes()[faces[0].first] + mesh.element_volumes()[faces[1].first];
        const double scale = 3.0 / area;
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) triplets.emplace_back(ids[static_cast<size_t>(r)], ids[static_cast<size_t>(c)], scale * k[static_cast<size_t>(r)] * k[static_cast<size_t>(c)]);
        }
    }
    Eigen::SparseMatrix<double> Q(mesh.num_vertices(), mesh.num_vertices());
    Q.setFromTriplets(triplets.begin(), triplets.end());
    return Q;
}

SmallVec strain_limit_edge(const SmallVec& d, const SmallVec& d_rest, double epsilon)
{
    const double rest = d_rest.norm();
    const double len = d.norm();
    const double lo = (1.0 - epsilon) * rest;
    const double hi = (1.0 + epsilon) * rest;
    if (len >= lo && len <= hi) return d;
    if (len == 0.0) return d_rest * (lo / std::max(rest, 1e-300));
    return d * (std::clamp(len, lo, hi) / len);
}

Eigen::MatrixXd strain_limit_project(const Eigen::MatrixXd& D, const Eigen::MatrixXd& D_rest, double epsilon)
{
    if (D.rows() != D_rest.rows() || D.cols() != D_rest.cols()) {
        fail(ErrorCode::ShapeMismatch, "edge matrices disagree");
    }
    if (!(epsilon >= 0.0 && epsilon <= 0.5)) fail(ErrorCode::InvalidArgument, "strain limit must lie in [0, 0.5]");
    Eigen::MatrixXd out(D.rows(), D.cols());
    for (Eigen::Index k = 0; k < D.cols(); ++k) {
        out.col(k) = strain_limit_edge(D.col(k), D_rest.col(k), epsilon);
    }
    return out;
}

} // namespace localdeform
