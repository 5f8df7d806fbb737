#include <localdeform/errors.hpp>
#include <localdeform/solver.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <string>
#include <thread>

namespace localdeform {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Each index is visited exactly once and writes only its own slot, so results
// do not depend on the thread count.
template <class Fn>
void parallel_for(Eigen::Index n, int threads, Fn&& fn)
{
    if (threads <= 1 || n < 512) {
        for (Eigen::Index i = 0; i < n; ++i) fn(i);
        return;
    }
    const auto count = static_cast<Eigen::Index>(threads);
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (Eigen::Index t = 0; t < count; ++t) {
        pool.emplace_back([&, t] {
            try {
                const Eigen::Index begin = n * t / count;
                const Eigen::Index end = n * (t + 1) / count;
                for (Eigen::Index i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

double inf_norm(const Eigen::MatrixXd& M)
{
    return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

} // namespace

SolverParams validate_params(SolverParams params, const RestMesh& mesh)
{
    validate_material(params.material, mesh);
    const LocalityParams& loc = params.locality;
    if (!std::isfinite(loc.w) || loc.w < 0.0) fail(ErrorCode::InvalidArgument, "locality weight w must be >= 0");
    if (!(loc.s > 0.0) || !std::isfinite(loc.s)) fail(ErrorCode::NonpositiveThreshold, "clamp threshold s must be positive");
    if (params.max_iters < 1) fail(ErrorCode::InvalidArgument, "max_iters must be >= 1");
    if (!(params.tol_primal >= 0.0) || !(params.tol_dual >= 0.0)) {
        fail(ErrorCode::InvalidArgument, "tolerances must be nonnegative");
    }
    if (params.iters_per_frame < 1) fail(ErrorCode::InvalidArgument, "iters_per_frame must be >= 1");
    if (params.threads < 1) fail(ErrorCode::InvalidArgument, "threads must be >= 1");

    const double max_area = mesh.vertex_areas().maxCoeff();
    const double bound = loc.w * max_area / loc.s;
    if (params.rho) {
        if (!(*params.rho > 0.0) || !std::isfinite(*params.rho)) fail(ErrorCode::InvalidArgument, "rho must be positive");
        if (loc.regularizer == Regularizer::scl1 && loc.w > 0.0 && !(*params.rho > bound)) {
            fail(ErrorCode::SafeguardViolated, "rho = " + std::to_string(*params.rho) +
                                                   " must exceed w max(a_i) / s = " + std::to_string(bound));
        }
    } else {
        params.rho = bound > 0.0 ? 2.0 * bound : max_area / loc.s;
    }

    if (const auto* nh = std::get_if<NeoHookean>(&params.material)) {
        if (params.gamma) {
            if (!(*params.gamma > 0.0) || !std::isfinite(*params.gamma)) fail(ErrorCode::InvalidArgument, "gamma must be positive");
        } else {
            params.gamma = (nh->mu + nh->lambda) * mesh.element_volumes().mean();
        }
    }
    return params;
}

Solver::Solver(std::shared_ptr<const RestMesh> mesh, SolverParams params, ConstraintSet constraints)
    : m_mesh(std::move(mesh))
    , m_requested(params)
    , m_params(validate_params(std::move(params), *m_mesh))
    , m_constraints(std::move(constraints))
{
    m_reduction = apply_affine_groups(m_constraints, *m_mesh);
    m_reduction_valid = true;
    m_lambda = m_params.locality.per_vertex_lambda(*m_mesh);
    init_cloth_edges();
    reset();
}

void Solver::init_cloth_edges()
{
    const RestMesh& mesh = *m_mesh;
    m_mean_volume = mesh.element_volumes().mean();
    m_cloth_edges.clear();
    m_cloth_rest_edges.resize(0, mesh.embed());
    m_bending.resize(0, 0);

    m_acap_denominators = Eigen::VectorXd::Zero(mesh.num_vertices());
    for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
        const VertexPatch& p = mesh.patches()[static_cast<size_t>(i)];
        m_acap_denominators[i] =
            (p.rest_edges.colwise().squaredNorm().transpose().array() * p.weights.array()).sum();
    }

    if (!std::holds_alternative<ClothArap>(m_params.material)) return;
    std::vector<std::array<int, 2>> edges;
    for (Eigen::Index j = 0; j < mesh.num_elements(); ++j) {
        for (const auto& e : mesh.element_edges()) {
            int a = mesh.elements()(j, e[0]);
            int b = mesh.elements()(j, e[1]);
            if (a > b) std::swap(a, b);
            edges.push_back({a, b});
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    m_cloth_edges = std::move(edges);
    m_cloth_rest_edges.resize(static_cast<Eigen::Index>(m_cloth_edges.size()), mesh.embed());
    for (size_t e = 0; e < m_cloth_edges.size(); ++e) {
        m_cloth_rest_edges.row(static_cast<Eigen::Index>(e)) =
            mesh.vertices().row(m_cloth_edges[e][1]) - mesh.vertices().row(m_cloth_edges[e][0]);
    }
    m_bending = bending_matrix(mesh);
}

void Solver::set_params(SolverParams params)
{
    const bool cloth_before = std::holds_alternative<ClothArap>(m_params.material);
    const size_t material_before = m_params.material.index();
    m_requested = params;
    m_params = validate_params(std::move(params), *m_mesh);
    m_lambda = m_params.locality.per_vertex_lambda(*m_mesh);
    if (m_params.material.index() != material_before ||
        cloth_before != std::holds_alternative<ClothArap>(m_params.material)) {
        init_cloth_edges();
        // Local variables have a different meaning for another material.
        reset();
    }
}

void Solver::set_constraints(ConstraintSet constraints)
{
    ReducedParameterization reduction = apply_affine_groups(constraints, *m_mesh);
    m_constraints = std::move(constraints);
    m_reduction = std::move(reduction);
    m_reduction_valid = true;
    for (Eigen::Index i = 0; i < m_mesh->num_vertices(); ++i) {
        if (m_reduction.is_fixed[static_cast<size_t>(i)]) m_state.V.row(i) = m_reduction.fixed.row(i);
    }
    pin_fixed_splits();
}

void Solver::pin_fixed_splits()
{
    for (Eigen::Index i = 0; i < m_mesh->num_vertices(); ++i) {
        if (!m_reduction.is_fixed[static_cast<size_t>(i)]) continue;
        m_state.Z.row(i) = m_state.V.row(i) - m_mesh->vertices().row(i);
        m_state.U.row(i).setZero();
    }
}

void Solver::set_handle_targets(const std::map<int, Eigen::VectorXd>& targets)
{
    for (const auto& [v, target] : targets) {
        auto it = m_constraints.handles.find(v);
        if (it == m_constraints.handles.end()) {
            fail(ErrorCode::InvalidArgument, "vertex " + std::to_string(v) + " is not a handle");
        }
        if (target.size() != m_mesh->embed()) fail(ErrorCode::ShapeMismatch, "handle target has wrong dimension");
        if (!target.allFinite()) fail(ErrorCode::NonFinite, "handle target is not finite");
    }
    for (const auto& [v, target] : targets) {
        m_constraints.handles[v] = target;
        m_reduction.fixed.row(v) = target.transpose();
        m_state.V.row(v) = target.transpose();
        m_state.Z.row(v) = m_state.V.row(v) - m_mesh->vertices().row(v);
        m_state.U.row(v).setZero();
    }
}

void Solver::set_state(SolverState state)
{
    const Eigen::Index n = m_mesh->num_vertices();
    const int embed = m_mesh->embed();
    const size_t locals = is_patch_material(m_params.material) ? static_cast<size_t>(n)
                                                               : static_cast<size_t>(m_mesh->num_elements());
    if (state.V.rows() != n || state.V.cols() != embed || state.Z.rows() != n || state.Z.cols() != embed ||
        state.U.rows() != n || state.U.cols() != embed || state.local.size() != locals) {
        fail(ErrorCode::ShapeMismatch, "warm-start state does not match the mesh");
    }
    m_state = std::move(state);
    m_previous_Z = m_state.Z;
}

void Solver::reset()
{
    const RestMesh& mesh = *m_mesh;
    const Eigen::Index n = mesh.num_vertices();
    const int embed = mesh.embed();
    m_state = SolverState{};
    m_state.V = mesh.vertices();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (m_reduction.is_fixed[static_cast<size_t>(i)]) m_state.V.row(i) = m_reduction.fixed.row(i);
    }
    m_state.Z = Eigen::MatrixXd::Zero(n, embed);
    m_state.U = Eigen::MatrixXd::Zero(n, embed);
    if (is_patch_material(m_params.material)) {
        ElementLocalState rest;
        rest.rotation = SmallMat::Identity(embed, embed);
        m_state.local.assign(static_cast<size_t>(n), rest);
    } else {
        const int dim = mesh.dim();
        ElementLocalState rest;
        rest.rotation = SmallMat::Identity(embed, dim);
        rest.X = SmallMat::Identity(dim, dim);
        rest.sigma = SmallVec::Ones(dim);
        rest.W = SmallMat::Zero(embed, dim);
        m_state.local.assign(static_cast<size_t>(mesh.num_elements()), rest);
    }
    m_state.strain_targets = m_cloth_rest_edges;
    pin_fixed_splits();
    m_previous_Z = m_state.Z;
}

void Solver::reset_duals()
{
    m_state.Z.setZero();
    m_state.U.setZero();
    for (ElementLocalState& local : m_state.local) {
        if (local.W.size() > 0) local.W.setZero();
    }
    pin_fixed_splits();
    m_previous_Z = m_state.Z;
}

void Solver::reset_rest()
{
    auto rest = std::make_shared<const RestMesh>(
        build_rest_mesh(m_state.V, m_mesh->elements(), m_mesh->kind()));
    m_mesh = std::move(rest);
    m_params = validate_params(m_requested, *m_mesh);
    m_lambda = m_params.locality.per_vertex_lambda(*m_mesh);
    // Handles stay where they are; prescribed groups are re-evaluated on the new rest.
    m_reduction = apply_affine_groups(m_constraints, *m_mesh);
    m_reduction_valid = true;
    init_cloth_edges();
    reset();
}

double Solver::element_penalty(Eigen::Index j) const
{
    return *m_params.gamma * m_mesh->element_volumes()[j] / m_mean_volume;
}

Solver::MatrixKey Solver::current_key() const
{
    MatrixKey key;
    key.material_index = m_params.material.index();
    key.rho = *m_params.rho;
    key.gamma = m_params.gamma.value_or(0.0);
    if (const auto* cloth = std::get_if<ClothArap>(&m_params.material)) {
        key.bending = cloth->bending_stiffness;
        key.strain = cloth->strain_stiffness;
    }
    key.structure = m_constraints.structure();
    key.mesh = m_mesh.get();
    return key;
}

void Solver::ensure_factorized()
{
    MatrixKey key = current_key();
    if (m_key && *m_key == key) return;

    const RestMesh& mesh = *m_mesh;
    const Eigen::Index n = mesh.num_vertices();
    std::vector<Eigen::Triplet<double>> triplets;
    auto add_edge = [&](int a, int b, double w) {
        triplets.emplace_back(a, a, w);
        triplets.emplace_back(b, b, w);
        triplets.emplace_back(a, b, -w);
        triplets.emplace_back(b, a, -w);
    };
    if (is_patch_material(m_params.material)) {
        for (const VertexPatch& p : mesh.patches()) {
            for (size_t k = 0; k < p.edges.size(); ++k) add_edge(p.edges[k][0], p.edges[k][1], p.weights[static_cast<Eigen::Index>(k)]);
        }
        if (const auto* cloth = std::get_if<ClothArap>(&m_params.material)) {
            for (const auto& e : m_cloth_edges) add_edge(e[0], e[1], cloth->strain_stiffness);
        }
    } else {
        for (Eigen::Index j = 0; j < mesh.num_elements(); ++j) {
            const Eigen::MatrixXd& G = mesh.diff_ops()[static_cast<size_t>(j)];
            const Eigen::MatrixXd GtG = element_penalty(j) * G.transpose() * G;
            for (Eigen::Index r = 0; r < GtG.rows(); ++r) {
                for (Eigen::Index c = 0; c < GtG.cols(); ++c) {
                    triplets.emplace_back(mesh.elements()(j, r), mesh.elements()(j, c), GtG(r, c));
                }
            }
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) triplets.emplace_back(i, i, *m_params.rho);
    m_system.resize(n, n);
    m_system.setFromTriplets(triplets.begin(), triplets.end());
    if (const auto* cloth = std::get_if<ClothArap>(&m_params.material); cloth && cloth->bending_stiffness > 0.0) {
        m_system += cloth->bending_stiffness * m_bending;
    }

    if (!m_reduction_valid) {
        m_reduction = apply_affine_groups(m_constraints, mesh);
        m_reduction_valid = true;
    }
    const Eigen::SparseMatrix<double> Pt = m_reduction.P.transpose();
    m_reduced_cross = Pt * m_system;
    m_reduced = (m_reduced_cross * m_reduction.P).pruned();
    m_identity_frames = identity_frames(m_reduction, mesh.embed());
    for (Eigen::Index begin : m_reduction.frame_dof_begin) {
        if (begin < 0) continue;
        for (int c = 0; c <= mesh.embed(); ++c) m_reduced.coeffRef(begin + c, begin + c) += kFrameRegularization;
    }
    m_reduced.makeCompressed();

    if (m_reduced.rows() > 0) {
        m_factor.compute(m_reduced);
        if (m_factor.info() != Eigen::Success || !(m_factor.vectorD().minCoeff() > 0.0)) {
            fail(ErrorCode::SingularSystem, "global system is not positive definite");
        }
    }
    ++m_factorizations;
    m_key = std::move(key);
}

const Eigen::SparseMatrix<double>& Solver::system_matrix()
{
    ensure_factorized();
    return m_system;
}

const Eigen::SparseMatrix<double>& Solver::reduced_matrix()
{
    ensure_factorized();
    return m_reduced;
}

Eigen::MatrixXd Solver::solve_global(const Eigen::MatrixXd& rhs)
{
    ensure_factorized();
    const int embed = m_mesh->embed();
    Eigen::MatrixXd V = m_reduction.fixed;
    if (m_reduced.rows() == 0) return V;
    for (int c = 0; c < embed; ++c) {
        Eigen::VectorXd r = m_reduction.P.transpose() * rhs.col(c) - m_reduced_cross * m_reduction.fixed.col(c) +
                            kFrameRegularization * m_identity_frames.col(c);
        const Eigen::VectorXd q = m_factor.solve(r);
        V.col(c) += m_reduction.P * q;
    }
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        if (m_reduction.is_fixed[static_cast<size_t>(i)]) V.row(i) = m_reduction.fixed.row(i);
    }
    return V;
}

void Solver::local_step_x()
{
    const auto start = Clock::now();
    const RestMesh& mesh = *m_mesh;
    const Eigen::MatrixXd& V = m_state.V;
    const int embed = mesh.embed();

    if (is_patch_material(m_params.material)) {
        const auto* acap = std::get_if<Acap>(&m_params.material);
        parallel_for(mesh.num_vertices(), m_params.threads, [&](Eigen::Index i) {
            const VertexPatch& p = mesh.patches()[static_cast<size_t>(i)];
            SmallMat M = SmallMat::Zero(embed, embed);
            for (size_t k = 0; k < p.edges.size(); ++k) {
                const auto kk = static_cast<Eigen::Index>(k);
                const SmallVec d = (V.row(p.edges[k][1]) - V.row(p.edges[k][0])).transpose();
                M.noalias() += p.weights[kk] * d * p.rest_edges.col(kk).transpose();
            }
            ElementLocalState& local = m_state.local[static_cast<size_t>(i)];
            if (acap) {
                local.rotation = rotation_from_covariance(M.transpose());
                const double denom = m_acap_denominators[i];
                const double numer = local.rotation.cwiseProduct(M).sum();
                local.scale = denom > 0.0 ? std::clamp(numer / denom, acap->scale_min, acap->scale_max) : 1.0;
            } else {
                local.rotation = rotation_from_covariance(M);
            }
        });
        if (const auto* cloth = std::get_if<ClothArap>(&m_params.material)) {
            parallel_for(static_cast<Eigen::Index>(m_cloth_edges.size()), m_params.threads, [&](Eigen::Index e) {
                const auto& edge = m_cloth_edges[static_cast<size_t>(e)];
                const SmallVec d = (V.row(edge[1]) - V.row(edge[0])).transpose();
                m_state.strain_targets.row(e) =
                    strain_limit_edge(d, m_cloth_rest_edges.row(e).transpose(), cloth->strain_limit).transpose();
            });
        }
    } else {
        const auto& nh = std::get<NeoHookean>(m_params.material);
        parallel_for(mesh.num_elements(), m_params.threads, [&](Eigen::Index j) {
            ElementLocalState& local = m_state.local[static_cast<size_t>(j)];
            const SmallMat G = mesh.deformation_gradient(V, j) + local.W;
            const SmallMatrixFactors f = svd_small(G, true);
            const SigmaProxResult prox =
                nh_prox_singular_values(f.sigma, element_penalty(j), nh.mu, nh.lambda, mesh.element_volumes()[j]);
            local.rotation = f.u * f.v.transpose();
            local.sigma = prox.sigma;
            local.X = f.v * prox.sigma.asDiagonal() * f.v.transpose();
        });
    }
    m_timings.local_x += seconds_since(start);
}

void Solver::local_step_z()
{
    const auto start = Clock::now();
    const RestMesh& mesh = *m_mesh;
    const LocalityParams& loc = m_params.locality;
    const double rho = *m_params.rho;
    m_previous_Z = m_state.Z;
    parallel_for(mesh.num_vertices(), m_params.threads, [&](Eigen::Index i) {
        if (m_reduction.is_fixed[static_cast<size_t>(i)]) return;
        const SmallVec x = (m_state.V.row(i) - mesh.vertices().row(i) + m_state.U.row(i)).transpose();
        m_state.Z.row(i) = regularizer_prox(loc.regularizer, x, m_lambda[i], rho, loc.s).transpose();
    });
    m_timings.local_z += seconds_since(start);
}

Eigen::MatrixXd Solver::global_rhs() const
{
    const RestMesh& mesh = *m_mesh;
    const int embed = mesh.embed();
    Eigen::MatrixXd b = *m_params.rho * (mesh.vertices() + m_state.Z - m_state.U);

    if (is_patch_material(m_params.material)) {
        const bool acap = std::holds_alternative<Acap>(m_params.material);
        for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
            const VertexPatch& p = mesh.patches()[static_cast<size_t>(i)];
            const ElementLocalState& local = m_state.local[static_cast<size_t>(i)];
            const SmallMat T = acap ? SmallMat(local.scale * local.rotation) : SmallMat(local.rotation.transpose());
            for (size_t k = 0; k < p.edges.size(); ++k) {
                const auto kk = static_cast<Eigen::Index>(k);
                const SmallVec t = p.weights[kk] * (T * p.rest_edges.col(kk));
                b.row(p.edges[k][1]) += t.transpose();
                b.row(p.edges[k][0]) -= t.transpose();
            }
        }
        if (const auto* cloth = std::get_if<ClothArap>(&m_params.material)) {
            for (size_t e = 0; e < m_cloth_edges.size(); ++e) {
                const auto row = cloth->strain_stiffness * m_state.strain_targets.row(static_cast<Eigen::Index>(e));
                b.row(m_cloth_edges[e][1]) += row;
                b.row(m_cloth_edges[e][0]) -= row;
            }
        }
    } else {
        for (Eigen::Index j = 0; j < mesh.num_elements(); ++j) {
            const ElementLocalState& local = m_state.local[static_cast<size_t>(j)];
            const Eigen::MatrixXd& G = mesh.diff_ops()[static_cast<size_t>(j)];
            const SmallMat target = local.rotation * local.X - local.W; // embed x dim
            const Eigen::MatrixXd contrib = element_penalty(j) * G.transpose() * target.transpose();
            for (int k = 0; k <= mesh.dim(); ++k) b.row(mesh.elements()(j, k)) += contrib.row(k);
        }
    }
    (void)embed;
    return b;
}

void Solver::global_step()
{
    const auto start = Clock::now();
    ensure_factorized();
    m_state.V = solve_global(global_rhs());
    m_timings.global += seconds_since(start);
}

IterationResiduals Solver::dual_update()
{
    const auto start = Clock::now();
    const RestMesh& mesh = *m_mesh;
    IterationResiduals r;
    const Eigen::MatrixXd primal = m_state.V - mesh.vertices() - m_state.Z;
    m_state.U += primal;
    r.primal_z = inf_norm(primal);
    r.dual_z = *m_params.rho * inf_norm(m_state.Z - m_previous_Z);
    if (!is_patch_material(m_params.material)) {
        double worst = 0.0;
        for (Eigen::Index j = 0; j < mesh.num_elements(); ++j) {
            ElementLocalState& local = m_state.local[static_cast<size_t>(j)];
            const SmallMat residual = mesh.deformation_gradient(m_state.V, j) - local.rotation * local.X;
            local.W += residual;
            worst = std::max(worst, residual.cwiseAbs().maxCoeff());
        }
        r.primal_x = worst;
    }
    m_timings.dual += seconds_since(start);
    return r;
}

IterationResiduals Solver::iterate()
{
    local_step_x();
    local_step_z();
    global_step();
    const IterationResiduals r = dual_update();
    m_state.history.push_back(r);
    ++m_state.iterations;
    return r;
}

bool Solver::is_converged(const IterationResiduals& r) const
{
    const double diag = m_mesh->bbox_diagonal();
    return r.primal_z <= m_params.tol_primal * diag && r.dual_z / *m_params.rho <= m_params.tol_dual * diag &&
           r.primal_x <= m_params.tol_primal;
}

DeformResult Solver::run(int max_iters)
{
    const auto start = Clock::now();
    const int budget = max_iters < 0 ? m_params.max_iters : max_iters;
    const PhaseTimings before = m_timings;
    const int factorizations_before = m_factorizations;
    DeformResult result;
    for (int it = 0; it < budget; ++it) {
        const IterationResiduals r = iterate();
        result.history.push_back(r);
        result.residuals = r;
        ++result.iterations;
        if (is_converged(r)) {
            result.converged = true;
            break;
        }
    }
    result.V = m_state.V;
    result.stats = displacement_stats(result.V, *m_mesh, result.roi_threshold);
    result.total_iterations = m_state.iterations;
    result.wall_time = seconds_since(start);
    result.timings.local_x = m_timings.local_x - before.local_x;
    result.timings.local_z = m_timings.local_z - before.local_z;
    result.timings.global = m_timings.global - before.global;
    result.timings.dual = m_timings.dual - before.dual;
    result.factorizations = m_factorizations - factorizations_before;
    return result;
}

double Solver::elastic_energy() const
{
    const RestMesh& mesh = *m_mesh;
    const Eigen::MatrixXd& V = m_state.V;
    double energy = 0.0;
    if (is_patch_material(m_params.material)) {
        const bool acap = std::holds_alternative<Acap>(m_params.material);
        for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
            const VertexPatch& p = mesh.patches()[static_cast<size_t>(i)];
            const ElementLocalState& local = m_state.local[static_cast<size_t>(i)];
            const SmallMat T = acap ? SmallMat(local.scale * local.rotation) : SmallMat(local.rotation.transpose());
            for (size_t k = 0; k < p.edges.size(); ++k) {
                const auto kk = static_cast<Eigen::Index>(k);
                const SmallVec d = (V.row(p.edges[k][1]) - V.row(p.edges[k][0])).transpose();
                energy += 0.5 * p.weights[kk] * (d - T * p.rest_edges.col(kk)).squaredNorm();
            }
        }
        if (const auto* cloth = std::get_if<ClothArap>(&m_params.material)) {
            for (size_t e = 0; e < m_cloth_edges.size(); ++e) {
                const auto ee = static_cast<Eigen::Index>(e);
                const Eigen::RowVectorXd d = V.row(m_cloth_edges[e][1]) - V.row(m_cloth_edges[e][0]);
                energy += 0.5 * cloth->strain_stiffness * (d - m_state.strain_targets.row(ee)).squaredNorm();
            }
            if (cloth->bending_stiffness > 0.0) {
                energy += 0.5 * cloth->bending_stiffness * (V.transpose() * (m_bending * V)).trace();
            }
        }
    } else {
        const auto& nh = std::get<NeoHookean>(m_params.material);
        for (Eigen::Index j = 0; j < mesh.num_elements(); ++j) {
            energy += mesh.element_volumes()[j] * nh_energy_sigma(m_state.local[static_cast<size_t>(j)].sigma, nh.mu, nh.lambda);
        }
    }
    return energy;
}

double Solver::locality_energy() const
{
    double energy = 0.0;
    for (Eigen::Index i = 0; i < m_mesh->num_vertices(); ++i) {
        if (m_lambda[i] == 0.0) continue;
        energy += m_lambda[i] * regularizer_value(m_params.locality.regularizer, m_state.Z.row(i).transpose(),
                                                  m_params.locality.s);
    }
    return energy;
}

double Solver::augmented_lagrangian() const
{
    const RestMesh& mesh = *m_mesh;
    double value = elastic_energy() + locality_energy();
    const double rho = *m_params.rho;
    const Eigen::MatrixXd coupling = m_state.V - mesh.vertices() - m_state.Z + m_state.U;
    value += 0.5 * rho * (coupling.squaredNorm() - m_state.U.squaredNorm());
    if (!is_patch_material(m_params.material)) {
        for (Eigen::Index j = 0; j < mesh.num_elements(); ++j) {
            const ElementLocalState& local = m_state.local[static_cast<size_t>(j)];
            const SmallMat F = mesh.deformation_gradient(m_state.V, j);
            value += 0.5 * element_penalty(j) *
                     ((F - local.rotation * local.X + local.W).squaredNorm() - local.W.squaredNorm());
        }
    }
    return value;
}

DeformResult solve(std::shared_ptr<const RestMesh> mesh, const ConstraintSet& constraints,
                   const SolverParams& params, const SolverState* warm_start)
{
    Solver solver(std::move(mesh), params, constraints);
    if (warm_start) solver.set_state(*warm_start);
    return solver.run();
}

} // namespace localdeform
