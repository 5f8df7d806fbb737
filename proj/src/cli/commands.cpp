#include <localdeform/cli.hpp>
#include <localdeform/errors.hpp>
#include <localdeform/io.hpp>
#include <localdeform/metrics.hpp>
#include <localdeform/server.hpp>
#include <localdeform/shapes.hpp>
#include <localdeform/solver.hpp>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>

namespace localdeform::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void apply_overrides(SolverParams& params, const Overrides& o)
{
    if (o.regularizer) params.locality.regularizer = io::parse_regularizer(*o.regularizer);
    if (o.energy) params.material = io::default_material(*o.energy);
    if (o.iters) params.max_iters = *o.iters;
    if (o.tol) params.tol_primal = params.tol_dual = *o.tol;
    if (o.w) params.locality.w = *o.w;
    if (o.s) params.locality.s = *o.s;
    params.threads = o.threads;
}

io::MeshFormat output_format(const io::SessionDocument& session)
{
    if (session.mesh_format) return *session.mesh_format;
    if (session.mesh_path) return io::format_from_path(*session.mesh_path);
    switch (session.kind) {
    case io::SessionKind::tet: return io::MeshFormat::nodele;
    case io::SessionKind::polyline: return io::MeshFormat::polyline_json;
    default: return io::MeshFormat::obj;
    }
}

std::string extension(io::MeshFormat format)
{
    switch (format) {
    case io::MeshFormat::obj: return ".obj";
    case io::MeshFormat::off: return ".off";
    case io::MeshFormat::nodele: return ".node";
    case io::MeshFormat::polyline_json: return ".json";
    }
    return ".obj";
}

std::string output_stem(const io::SessionDocument& session, const fs::path& session_path)
{
    if (session.mesh_path) return fs::path(*session.mesh_path).stem().string() + "_deformed";
    return session_path.stem().string() + "_deformed";
}

json echo_overrides(const Overrides& o)
{
    return {{"threads", o.threads}, {"seed", o.seed}};
}

int fail_with(const std::exception& e)
{
    spdlog::error("{}", e.what());
    return kExitError;
}

} // namespace

void configure_logging()
{
    static bool configured = false;
    if (!configured) {
        spdlog::set_default_logger(spdlog::stderr_color_mt("localdeform"));
        configured = true;
    }
    spdlog::set_level(spdlog::level::info);
    if (const char* level = std::getenv("LOCALDEFORM_LOG")) {
        const auto parsed = spdlog::level::from_str(level);
        // from_str maps unknown names to off; only "off" itself should silence output.
        if (parsed != spdlog::level::off || std::string(level) == "off") spdlog::set_level(parsed);
        else spdlog::warn("unknown LOCALDEFORM_LOG level '{}'", level);
    }
}

int cmd_solve(const SolveOptions& options)
{
    try {
        io::SessionDocument session = io::read_session(options.session);
        const fs::path base = options.session.parent_path();
        if (options.mesh) {
            session.mesh_path = fs::absolute(*options.mesh).string();
            session.mesh_format.reset();
            session.inline_mesh.reset();
        }
        apply_overrides(session.params, options.overrides);
        auto mesh = io::build_session_mesh(session, base);
        spdlog::info("solving {} ({} vertices, {} elements, {})", options.session.string(), mesh->num_vertices(),
                     mesh->num_elements(), io::material_type_name(session.params.material));

        Solver solver(mesh, session.params, session.constraints);
        const DeformResult result = solver.run();

        const io::MeshFormat format = output_format(session);
        const fs::path mesh_out = options.out / (output_stem(session, options.session) + extension(format));
        io::write_result(mesh_out, format, result, *mesh, true);

        json report = io::solve_report(result, solver.params(), *mesh);
        report["session"] = options.session.string();
        report["output"] = mesh_out.string();
        report["cli"] = echo_overrides(options.overrides);
        io::write_json(options.report.value_or(options.out / "report.json"), report);

        spdlog::info("{} after {} iterations, ROI {} vertices (measure {:.6g}), {:.3f} s",
                     result.converged ? "converged" : "not converged", result.iterations, result.stats.roi_count,
                     result.stats.roi_measure, result.wall_time);
        return result.converged ? kExitConverged : kExitNotConverged;
    } catch (const std::exception& e) {
        return fail_with(e);
    }
}

int cmd_animate(const AnimateOptions& options)
{
    try {
        const io::TrajectoryDocument trajectory = io::read_trajectory(options.trajectory);
        fs::path base = options.trajectory.parent_path();
        io::SessionDocument session;
        if (trajectory.inline_session) {
            session = *trajectory.inline_session;
        } else {
            const fs::path session_path = base / *trajectory.session_path;
            session = io::read_session(session_path);
            base = session_path.parent_path();
        }
        apply_overrides(session.params, options.overrides);
        auto mesh = io::build_session_mesh(session, base);

        const double t0 = trajectory.keyframes.front().time;
        const double t1 = trajectory.keyframes.back().time;
        const double fps = options.fps.value_or(trajectory.frame_rate);
        if (!(fps > 0.0)) fail(ErrorCode::InvalidArgument, "frame rate must be positive");
        const auto frames = static_cast<long>(std::floor((t1 - t0) * fps + 1e-9)) + 1;

        ConstraintSet constraints = session.constraints;
        for (const auto& [v, target] : io::sample_trajectory(trajectory, t0)) constraints.handles[v] = target;
        Solver solver(mesh, session.params, constraints);

        const io::MeshFormat format = output_format(session);
        json frame_reports = json::array();
        bool all_converged = true;
        std::map<int, Eigen::VectorXd> previous_targets;
        DeformResult previous;
        bool have_previous = false;
        for (long k = 0; k < frames; ++k) {
            const double t = t0 + static_cast<double>(k) / fps;
            const auto targets = io::sample_trajectory(trajectory, t);
            const bool unchanged = have_previous && previous.converged && targets.size() == previous_targets.size() &&
                                   std::equal(targets.begin(), targets.end(), previous_targets.begin(),
                                              [](const auto& a, const auto& b) {
                                                  return a.first == b.first && a.second == b.second;
                                              });
            DeformResult result;
            if (unchanged && !trajectory.reset_rest_each_step) {
                result = previous;
                result.iterations = 0;
                result.history.clear();
            } else {
                solver.set_handle_targets(targets);
                result = solver.run();
            }
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%04ld", k);
            const fs::path mesh_out = options.out / (std::string(name) + extension(format));
            io::write_result(mesh_out, format, result, solver.mesh(), true);
            frame_reports.push_back({{"frame", k},
                                     {"time", t},
                                     {"iterations", result.iterations},
                                     {"converged", result.converged},
                                     {"roi_count", result.stats.roi_count},
                                     {"roi_measure", result.stats.roi_measure},
                                     {"wall_time", result.wall_time},
                                     {"output", mesh_out.string()}});
            all_converged = all_converged && result.converged;
            spdlog::info("frame {} t={:.4g}: {} iterations, ROI {}", k, t, result.iterations, result.stats.roi_count);
            previous = result;
            previous_targets = targets;
            have_previous = true;
            if (trajectory.reset_rest_each_step) solver.reset_rest();
        }

        json report;
        report["version"] = io::kDocumentVersion;
        report["command"] = "animate";
        report["trajectory"] = options.trajectory.string();
        report["frame_rate"] = fps;
        report["reset_rest_each_step"] = trajectory.reset_rest_each_step;
        report["frames"] = frame_reports;
        report["params"] = io::params_to_json(solver.params());
        report["cli"] = echo_overrides(options.overrides);
        io::write_json(options.report.value_or(options.out / "report.json"), report);
        return all_converged ? kExitConverged : kExitNotConverged;
    } catch (const std::exception& e) {
        return fail_with(e);
    }
}

int cmd_compare(const CompareOptions& options)
{
    try {
        io::SessionDocument session = io::read_session(options.session);
        apply_overrides(session.params, options.overrides);
        auto mesh = io::build_session_mesh(session, options.session.parent_path());
        const std::vector<int> dragged = displaced_handles(*mesh, session.constraints);
        if (dragged.empty()) fail(ErrorCode::InvalidArgument, "session has no displaced handle to compare at");
        const io::MeshFormat format = output_format(session);
        const std::string stem = output_stem(session, options.session);

        SolverParams scl1 = session.params;
        scl1.locality.regularizer = Regularizer::scl1;
        Solver solver(mesh, scl1, session.constraints);
        const DeformResult reference = solver.run();

        SolverParams l21 = session.params;
        l21.locality.regularizer = Regularizer::l21;
        const WeightMatch match =
            match_roi_weight(mesh, session.constraints, l21, reference.stats.roi_count, options.roi_tolerance);

        auto entry = [&](const char* name, const DeformResult& r, double w) {
            const fs::path path = options.out / (stem + "_" + name + extension(format));
            io::write_result(path, format, r, *mesh, true);
            return json{{"w", w},
                        {"roi_count", r.stats.roi_count},
                        {"roi_measure", r.stats.roi_measure},
                        {"handle_strain", max_incident_edge_strain(*mesh, r.V, dragged)},
                        {"iterations", r.iterations},
                        {"converged", r.converged},
                        {"output", path.string()}};
        };
        json report;
        report["version"] = io::kDocumentVersion;
        report["command"] = "compare";
        report["session"] = options.session.string();
        report["roi_tolerance"] = options.roi_tolerance;
        report["scl1"] = entry("scl1", reference, scl1.locality.w);
        report["l21"] = entry("l21", match.result, match.w);
        report["l21"]["evaluations"] = match.evaluations;
        report["l21"]["matched"] = match.matched;
        report["params"] = io::params_to_json(solver.params());
        report["cli"] = echo_overrides(options.overrides);
        io::write_json(options.report.value_or(options.out / "report.json"), report);
        spdlog::info("scl1: ROI {} strain {:.4g}; l21 (w = {:.4g}): ROI {} strain {:.4g}", reference.stats.roi_count,
                     report["scl1"]["handle_strain"].get<double>(), match.w, match.result.stats.roi_count,
                     report["l21"]["handle_strain"].get<double>());
        const bool ok = reference.converged && match.result.converged && match.matched;
        return ok ? kExitConverged : kExitNotConverged;
    } catch (const std::exception& e) {
        return fail_with(e);
    }
}

int cmd_bench(const BenchOptions& options)
{
    using Clock = std::chrono::steady_clock;
    try {
        if (options.sizes.empty()) fail(ErrorCode::InvalidArgument, "no sizes requested");
        if (options.iters < 2) fail(ErrorCode::InvalidArgument, "bench needs at least two iterations");
        std::mt19937 rng(options.seed);
        std::uniform_real_distribution<double> jitter(-0.05, 0.05);
        json rows = json::array();
        bool single_factorization = true;
        std::printf("%10s %10s %14s %14s %14s\n", "vertices", "elements", "ms/iteration", "first_ms", "factorizations");
        for (int size : options.sizes) {
            if (size < 12) fail(ErrorCode::InvalidArgument, "bench sizes must be at least 12 vertices");
            // 5:1 bar with about `size` vertices.
            const int ny = std::max(1, static_cast<int>(std::lround((std::sqrt(20.0 * size + 16.0) - 6.0) / 10.0)));
            const int nx = 5 * ny;
            const shapes::MeshData data = shapes::bar_2d(nx, ny, 5.0, 1.0);
            auto mesh = std::make_shared<const RestMesh>(build_rest_mesh(data.vertices, data.elements, data.kind));
            ConstraintSet constraints;
            for (int j = 0; j <= ny; ++j) {
                const int v = j * (nx + 1) + nx;
                Eigen::VectorXd target = data.vertices.row(v).transpose();
                target[0] += 0.5 + jitter(rng);
                constraints.handles[v] = target;
            }
            SolverParams params;
            params.locality.w = 10.0;
            params.locality.s = 0.2;
            params.tol_primal = params.tol_dual = 0.0;
            params.threads = options.threads;
            Solver solver(mesh, params, constraints);

            const auto first_start = Clock::now();
            solver.iterate();
            const double first_ms = std::chrono::duration<double, std::milli>(Clock::now() - first_start).count();
            const auto start = Clock::now();
            for (int k = 1; k < options.iters; ++k) solver.iterate();
            const double per_iter =
                std::chrono::duration<double, std::milli>(Clock::now() - start).count() / (options.iters - 1);
            const int factorizations = solver.factorization_count();
            single_factorization = single_factorization && factorizations == 1;
            std::printf("%10ld %10ld %14.4f %14.4f %14d\n", static_cast<long>(mesh->num_vertices()),
                        static_cast<long>(mesh->num_elements()), per_iter, first_ms, factorizations);
            rows.push_back({{"vertices", mesh->num_vertices()},
                            {"elements", mesh->num_elements()},
                            {"iterations", options.iters},
                            {"ms_per_iteration", per_iter},
                            {"first_iteration_ms", first_ms},
                            {"factorizations", factorizations},
                            {"timings", {{"local_x", solver.timings().local_x},
                                         {"local_z", solver.timings().local_z},
                                         {"global", solver.timings().global},
                                         {"dual", solver.timings().dual}}}});
        }
        json report;
        report["version"] = io::kDocumentVersion;
        report["command"] = "bench";
        report["threads"] = options.threads;
        report["seed"] = options.seed;
        report["rows"] = rows;
        if (options.report) io::write_json(*options.report, report);
        if (!single_factorization) {
            spdlog::error("global system was factorized more than once per run");
            return kExitError;
        }
        return kExitConverged;
    } catch (const std::exception& e) {
        return fail_with(e);
    }
}

int cmd_serve(const ServeOptions& options)
{
    try {
        service::ServerOptions server_options;
        server_options.address = options.address;
        server_options.port = options.port;
        server_options.tick_ms = options.tick_ms;
        server_options.handle_signals = true;
        service::Server server(server_options);
        server.run();
        return kExitConverged;
    } catch (const std::exception& e) {
        return fail_with(e);
    }
}

int cmd_gen(const GenOptions& o)
{
    try {
        io::SessionDocument session;
        shapes::MeshData data;
        io::MeshFormat format = io::MeshFormat::obj;
        const int r = o.resolution;
        if (r < 1) fail(ErrorCode::InvalidArgument, "resolution must be >= 1");
        if (o.shape == "bar") {
            const int nx = 40 * r, ny = 8 * r;
            data = shapes::bar_2d(nx, ny, 5.0, 1.0);
            session.kind = io::SessionKind::triangle;
            for (int j = 0; j <= ny; ++j) {
                const int v = j * (nx + 1) + nx;
                Eigen::VectorXd t = data.vertices.row(v).transpose();
                t[0] += o.offset;
                session.constraints.handles[v] = t;
            }
        } else if (o.shape == "bar3d") {
            const int nx = 20 * r, ny = 5 * r, nz = 5 * r;
            data = shapes::bar_3d(nx, ny, nz, 5.0, 1.0, 1.0);
            session.kind = io::SessionKind::tet;
            format = io::MeshFormat::nodele;
            for (int k = 0; k <= nz; ++k) {
                for (int j = 0; j <= ny; ++j) {
                    const int v = (k * (ny + 1) + j) * (nx + 1) + nx;
                    Eigen::VectorXd t = data.vertices.row(v).transpose();
                    t[0] += o.offset;
                    session.constraints.handles[v] = t;
                }
            }
        } else if (o.shape == "disk") {
            const int rings = 12 * r;
            data = shapes::disk(1.0, rings);
            session.kind = io::SessionKind::triangle;
            // Centre vertex plus the first ring.
            for (Eigen::Index i = 0; i < data.vertices.rows(); ++i) {
                if (data.vertices.row(i).norm() > 1.0 / rings + 1e-9) continue;
                Eigen::VectorXd t = data.vertices.row(i).transpose();
                t[0] += o.offset;
                session.constraints.handles[static_cast<int>(i)] = t;
            }
        } else if (o.shape == "cloth") {
            const int n = 20 * r;
            data = shapes::cloth_grid(n, 1.0);
            session.kind = io::SessionKind::cloth;
            session.params.material = ClothArap{0.01, 0.1, 10.0};
            session.constraints.handles[0] = data.vertices.row(0).transpose();
            Eigen::VectorXd t = data.vertices.row(n).transpose();
            t[2] += o.offset;
            session.constraints.handles[n] = t;
        } else if (o.shape == "polyline") {
            data = shapes::polyline_arc(40 * r, 5.0, 0.5);
            session.kind = io::SessionKind::polyline;
            session.params.material = PolylineArap{};
            format = io::MeshFormat::polyline_json;
            const int last = static_cast<int>(data.vertices.rows()) - 1;
            Eigen::VectorXd t = data.vertices.row(last).transpose();
            t[1] += o.offset;
            session.constraints.handles[last] = t;
        } else {
            fail(ErrorCode::InvalidArgument, "unknown shape '" + o.shape + "'");
        }
        session.params.locality.w = o.w;
        session.params.locality.s = o.s;
        const std::string mesh_name = o.shape + extension(format);
        io::write_mesh(o.out / mesh_name, format, data.vertices, data.elements, data.kind);
        session.mesh_path = mesh_name;
        io::write_json(o.out / (o.shape + ".session.json"), io::session_to_json(session));
        return kExitConverged;
    } catch (const std::exception& e) {
        return fail_with(e);
    }
}

int run(int argc, char** argv)
{
    configure_logging();
    CLI::App app{"Localized shape deformation with a clamped-l1 locality term"};
    app.require_subcommand(1);

    auto add_overrides = [](CLI::App* cmd, Overrides& o) {
        cmd->add_option("--regularizer", o.regularizer, "Locality regularizer")
            ->check(CLI::IsMember({"scl1", "l21", "none"}));
        cmd->add_option("--energy", o.energy, "Elastic energy")->check(CLI::IsMember({"arap", "acap", "nh", "cloth", "polyline"}));
        cmd->add_option("--iters", o.iters, "Maximum ADMM iterations")->check(CLI::PositiveNumber);
        cmd->add_option("--tol", o.tol, "Primal and dual tolerance relative to the bounding-box diagonal (0 runs all iterations)")
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--w", o.w, "Locality weight")->check(CLI::NonNegativeNumber);
        cmd->add_option("--s", o.s, "Clamp threshold")->check(CLI::PositiveNumber);
        cmd->add_option("--threads", o.threads, "Worker threads for the local steps")->check(CLI::PositiveNumber);
        cmd->add_option("--seed", o.seed, "Random seed (echoed in the report)");
    };

    SolveOptions solve;
    auto* solve_cmd = app.add_subcommand("solve", "Solve one session and write the deformed mesh, sidecar and report");
    solve_cmd->add_option("--session", solve.session, "Session document")->required()->check(CLI::ExistingFile);
    solve_cmd->add_option("--mesh", solve.mesh, "Replace the session mesh")->check(CLI::ExistingFile);
    solve_cmd->add_option("--out", solve.out, "Output directory")->required();
    solve_cmd->add_option("--report", solve.report, "Report path (default <out>/report.json)");
    add_overrides(solve_cmd, solve.overrides);

    AnimateOptions animate;
    auto* animate_cmd = app.add_subcommand("animate", "Replay a handle trajectory with warm starts");
    animate_cmd->add_option("--trajectory", animate.trajectory, "Trajectory document")->required()->check(CLI::ExistingFile);
    animate_cmd->add_option("--out", animate.out, "Output directory")->required();
    animate_cmd->add_option("--report", animate.report, "Report path (default <out>/report.json)");
    animate_cmd->add_option("--fps", animate.fps, "Samples per second")->check(CLI::PositiveNumber);
    add_overrides(animate_cmd, animate.overrides);

    CompareOptions compare;
    auto* compare_cmd = app.add_subcommand("compare", "Solve with scl1 and with l21 at a matched ROI size");
    compare_cmd->add_option("--session", compare.session, "Session document")->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--out", compare.out, "Output directory")->required();
    compare_cmd->add_option("--report", compare.report, "Report path (default <out>/report.json)");
    compare_cmd->add_option("--roi-tolerance", compare.roi_tolerance, "Relative ROI count mismatch allowed for l21")
        ->check(CLI::Range(0.0, 1.0));
    add_overrides(compare_cmd, compare.overrides);

    BenchOptions bench;
    auto* bench_cmd = app.add_subcommand("bench", "Per-iteration timings against vertex count");
    bench_cmd->add_option("--sizes", bench.sizes, "Approximate vertex counts")->delimiter(',');
    bench_cmd->add_option("--iters", bench.iters, "Iterations per size")->check(CLI::Range(2, 1000000));
    bench_cmd->add_option("--report", bench.report, "Report path");
    bench_cmd->add_option("--threads", bench.threads, "Worker threads")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--seed", bench.seed, "Seed for the handle offsets");

    ServeOptions serve;
    auto* serve_cmd = app.add_subcommand("serve", "Host interactive sessions over a websocket");
    serve_cmd->add_option("--address", serve.address, "Listen address");
    serve_cmd->add_option("--port", serve.port, "Listen port");
    serve_cmd->add_option("--tick-ms", serve.tick_ms, "Milliseconds between solver ticks")->check(CLI::PositiveNumber);

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Write a sample mesh and session");
    gen_cmd->add_option("--shape", gen.shape, "Sample shape")->check(CLI::IsMember({"bar", "bar3d", "disk", "cloth", "polyline"}));
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--resolution", gen.resolution, "Refinement factor")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--offset", gen.offset, "Handle offset");
    gen_cmd->add_option("--w", gen.w, "Locality weight")->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--s", gen.s, "Clamp threshold")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (solve_cmd->parsed()) return cmd_solve(solve);
    if (animate_cmd->parsed()) return cmd_animate(animate);
    if (compare_cmd->parsed()) return cmd_compare(compare);
    if (bench_cmd->parsed()) return cmd_bench(bench);
    if (serve_cmd->parsed()) return cmd_serve(serve);
    if (gen_cmd->parsed()) return cmd_gen(gen);
    return kExitUsage;
}

} // namespace localdeform::cli
