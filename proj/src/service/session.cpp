#include <localdeform/errors.hpp>
#include <localdeform/session.hpp>

#include <spdlog/spdlog.h>

#include <algorithm>

namespace localdeform::service {

using nlohmann::json;

namespace {

json flatten(const Eigen::MatrixXd& M)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) a.push_back(M(i, c));
    }
    return a;
}

json base_message(const char* type)
{
    return {{"protocol", kProtocolVersion}, {"type", type}};
}

void check_fields(const json& message, std::initializer_list<const char*> allowed)
{
    for (const auto& [key, value] : message.items()) {
        if (key == "protocol" || key == "type" || key == "request_id") continue;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            fail(ErrorCode::SchemaError, "/" + key + ": unknown field");
        }
    }
}

Eigen::VectorXd target_vector(const json& j, const std::string& where)
{
    if (!j.is_array()) fail(ErrorCode::SchemaError, where + ": expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (size_t k = 0; k < j.size(); ++k) {
        if (!j[k].is_number()) fail(ErrorCode::SchemaError, where + ": expected an array of numbers");
        v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
    }
    return v;
}

int vertex_index(const json& j, const std::string& where)
{
    if (!j.is_number_integer()) fail(ErrorCode::SchemaError, where + ": expected an integer");
    return j.get<int>();
}

} // namespace

json ack_message(const json& request_id)
{
    json m = base_message("ack");
    m["request_id"] = request_id;
    return m;
}

json error_message(const json& request_id, const std::string& code, const std::string& message)
{
    json m = base_message("error");
    m["request_id"] = request_id;
    m["code"] = code;
    m["message"] = message;
    return m;
}

Session::Session(std::filesystem::path base_dir) : m_base_dir(std::move(base_dir)) {}

std::vector<json> Session::handle(const json& message)
{
    json request_id = nullptr;
    try {
        if (!message.is_object()) fail(ErrorCode::SchemaError, "/: message must be an object");
        if (auto it = message.find("request_id"); it != message.end()) request_id = *it;
        auto protocol = message.find("protocol");
        if (protocol == message.end()) fail(ErrorCode::SchemaError, "/protocol: required field is missing");
        if (!protocol->is_number_integer() || protocol->get<int>() != kProtocolVersion) {
            fail(ErrorCode::SchemaError, "/protocol: unsupported protocol version");
        }
        auto type = message.find("type");
        if (type == message.end() || !type->is_string()) fail(ErrorCode::SchemaError, "/type: expected a string");
        std::vector<json> out = dispatch(type->get<std::string>(), message);
        out.insert(out.begin(), ack_message(request_id));
        return out;
    } catch (const Error& e) {
        spdlog::debug("message rejected: {}", e.what());
        return {error_message(request_id, std::string(to_string(e.code())), e.what())};
    } catch (const std::exception& e) {
        return {error_message(request_id, "InternalError", e.what())};
    }
}

std::vector<json> Session::dispatch(const std::string& type, const json& message)
{
    if (type == "load_session") {
        load(message);
        return {topology_message()};
    }
    if (type == "set_params") {
        set_params(message);
        return {};
    }
    if (type == "set_handles") {
        set_handles(message);
        return {};
    }
    if (type == "drag_handles") {
        drag_handles(message);
        return {};
    }
    if (type == "reset_rest") {
        check_fields(message, {});
        require_loaded();
        m_solver->reset_rest();
        m_rest_changed = true;
        m_idle = false;
        return {topology_message()};
    }
    if (type == "reset_duals") {
        check_fields(message, {});
        require_loaded();
        m_solver->reset_duals();
        m_idle = false;
        return {};
    }
    if (type == "pause" || type == "resume") {
        check_fields(message, {});
        require_loaded();
        m_paused = type == "pause";
        return {};
    }
    if (type == "export") {
        check_fields(message, {});
        require_loaded();
        return {export_message(message.value("request_id", json(nullptr)))};
    }
    fail(ErrorCode::SchemaError, "/type: unknown message type '" + type + "'");
}

void Session::require_loaded() const
{
    if (!m_solver) fail(ErrorCode::InvalidArgument, "no session loaded");
}

void Session::load(const json& message)
{
    check_fields(message, {"document", "path"});
    io::SessionDocument document;
    std::filesystem::path base = m_base_dir;
    if (auto it = message.find("document"); it != message.end()) {
        document = io::parse_session(*it);
    } else if (auto p = message.find("path"); p != message.end() && p->is_string()) {
        std::filesystem::path path = p->get<std::string>();
        if (path.is_relative()) path = m_base_dir / path;
        document = io::read_session(path);
        base = path.parent_path();
        if (document.mesh_path && std::filesystem::path(*document.mesh_path).is_relative()) {
            document.mesh_path = std::filesystem::absolute(base / *document.mesh_path).lexically_normal().string();
        }
    } else {
        fail(ErrorCode::SchemaError, "/document: required field is missing");
    }
    auto mesh = io::build_session_mesh(document, base);
    auto solver = std::make_unique<Solver>(mesh, document.params, document.constraints);
    m_document = std::move(document);
    m_solver = std::move(solver);
    m_paused = false;
    m_idle = false;
    m_rest_changed = false;
    m_last_factorizations = m_solver->factorization_count();
    m_last_residuals = {};
    m_last_converged = false;
    spdlog::info("session loaded: {} vertices, {} elements", mesh->num_vertices(), mesh->num_elements());
}

void Session::set_params(const json& message)
{
    require_loaded();
    check_fields(message, {"w", "s", "regularizer", "energy", "material", "rho", "gamma", "max_iters", "tol_primal",
                           "tol_dual", "iters_per_frame", "threads"});
    json doc = io::session_to_json(m_document);
    auto copy = [&](const char* key, json& target, const char* target_key) {
        if (auto it = message.find(key); it != message.end()) target[target_key] = *it;
    };
    copy("w", doc["locality"], "w");
    copy("s", doc["locality"], "s");
    copy("regularizer", doc["locality"], "regularizer");
    for (const char* key : {"rho", "gamma", "max_iters", "tol_primal", "tol_dual", "iters_per_frame", "threads"}) {
        copy(key, doc["solver"], key);
    }
    if (auto it = message.find("energy"); it != message.end()) {
        if (!it->is_string()) fail(ErrorCode::SchemaError, "/energy: expected a string");
        doc["material"] = {{"type", it->get<std::string>()}};
    }
    copy("material", doc, "material");
    // The patched document goes through the same strict parser as a fresh load.
    io::SessionDocument updated = io::parse_session(doc);
    m_solver->set_params(updated.params);
    m_document.params = updated.params;
    m_idle = false;
}

void Session::set_handles(const json& message)
{
    require_loaded();
    check_fields(message, {"vertices", "handles"});
    ConstraintSet constraints = m_solver->constraints();
    constraints.handles.clear();
    if (auto it = message.find("vertices"); it != message.end()) {
        if (!it->is_array()) fail(ErrorCode::SchemaError, "/vertices: expected an array of integers");
        for (size_t k = 0; k < it->size(); ++k) {
            const int v = vertex_index((*it)[k], "/vertices/" + std::to_string(k));
            if (v < 0 || v >= m_solver->mesh().num_vertices()) fail(ErrorCode::IndexOutOfRange, "handle vertex out of range");
            constraints.handles[v] = m_solver->state().V.row(v).transpose();
        }
    }
    if (auto it = message.find("handles"); it != message.end()) {
        if (!it->is_array()) fail(ErrorCode::SchemaError, "/handles: expected an array");
        for (size_t k = 0; k < it->size(); ++k) {
            const std::string where = "/handles/" + std::to_string(k);
            const json& h = (*it)[k];
            if (!h.is_object() || !h.contains("vertex") || !h.contains("target")) {
                fail(ErrorCode::SchemaError, where + ": expected {vertex, target}");
            }
            constraints.handles[vertex_index(h["vertex"], where + "/vertex")] = target_vector(h["target"], where + "/target");
        }
    }
    m_solver->set_constraints(constraints);
    m_document.constraints = m_solver->constraints();
    m_idle = false;
}

void Session::drag_handles(const json& message)
{
    require_loaded();
    check_fields(message, {"targets"});
    auto it = message.find("targets");
    if (it == message.end() || !it->is_array()) fail(ErrorCode::SchemaError, "/targets: expected an array");
    std::map<int, Eigen::VectorXd> targets;
    for (size_t k = 0; k < it->size(); ++k) {
        const std::string where = "/targets/" + std::to_string(k);
        const json& t = (*it)[k];
        if (!t.is_object() || !t.contains("vertex") || !t.contains("target")) {
            fail(ErrorCode::SchemaError, where + ": expected {vertex, target}");
        }
        targets[vertex_index(t["vertex"], where + "/vertex")] = target_vector(t["target"], where + "/target");
    }
    m_solver->set_handle_targets(targets);
    m_document.constraints = m_solver->constraints();
    m_idle = false;
}

std::optional<json> Session::tick()
{
    if (!m_solver || m_paused) return std::nullopt;
    if (!m_idle) {
        const DeformResult result = m_solver->run(m_solver->params().iters_per_frame);
        m_last_residuals = result.residuals;
        m_last_converged = result.converged;
        m_idle = result.converged;
        const int count = m_solver->factorization_count();
        if (count != m_last_factorizations) {
            spdlog::info("global system refactorized ({} total)", count);
            m_last_factorizations = count;
        }
    }
    return frame_message();
}

json Session::topology_message() const
{
    const RestMesh& mesh = m_solver->mesh();
    json m = base_message("mesh_topology");
    m["kind"] = io::kind_name(m_document.kind);
    m["embed"] = mesh.embed();
    m["num_vertices"] = mesh.num_vertices();
    json elements = json::array();
    for (Eigen::Index j = 0; j < mesh.num_elements(); ++j) {
        for (Eigen::Index c = 0; c < mesh.elements().cols(); ++c) elements.push_back(mesh.elements()(j, c));
    }
    m["vertices_per_element"] = mesh.elements().cols();
    m["elements"] = elements;
    m["rest_positions"] = flatten(mesh.vertices());
    json handles = json::array();
    for (const auto& [v, target] : m_solver->constraints().handles) handles.push_back(v);
    m["handles"] = handles;
    return m;
}

json Session::frame_message() const
{
    const DisplacementStats stats = displacement_stats(m_solver->state().V, m_solver->mesh(), kRoiThreshold);
    json m = base_message("frame");
    m["iteration"] = m_solver->state().iterations;
    m["positions"] = flatten(m_solver->state().V);
    json magnitudes = json::array();
    for (Eigen::Index i = 0; i < stats.magnitudes.size(); ++i) magnitudes.push_back(stats.magnitudes[i]);
    m["displacement"] = magnitudes;
    m["residuals"] = io::residuals_to_json(m_last_residuals);
    m["converged"] = m_last_converged;
    m["roi_threshold"] = kRoiThreshold;
    m["roi_count"] = stats.roi_count;
    m["factorizations"] = m_solver->factorization_count();
    return m;
}

io::SessionDocument Session::export_document() const
{
    require_loaded();
    io::SessionDocument document = m_document;
    document.constraints = m_solver->constraints();
    if (m_rest_changed) {
        shapes::MeshData data;
        data.vertices = m_solver->mesh().vertices();
        data.elements = m_solver->mesh().elements();
        data.kind = m_solver->mesh().kind();
        document.inline_mesh = std::move(data);
        document.mesh_path.reset();
        document.mesh_format.reset();
    }
    return document;
}

json Session::export_message(const json& request_id) const
{
    json m = base_message("export");
    m["request_id"] = request_id;
    m["document"] = io::session_to_json(export_document());
    const DisplacementStats stats = displacement_stats(m_solver->state().V, m_solver->mesh(), kRoiThreshold);
    m["result"] = {{"iterations", m_solver->state().iterations},
                   {"positions", flatten(m_solver->state().V)},
                   {"roi_count", stats.roi_count},
                   {"converged", m_last_converged}};
    return m;
}

} // namespace localdeform::service
