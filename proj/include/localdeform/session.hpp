#pragma once

#include <localdeform/io.hpp>
#include <localdeform/solver.hpp>

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

namespace localdeform::service {

inline constexpr int kProtocolVersion = 1;

/// One live editing session: owns a solver and answers wire messages.
///
/// Not thread-safe; the host calls handle() and tick() from one thread, which
/// makes every message apply at an iteration boundary.
class Session
{
public:
    explicit Session(std::filesystem::path base_dir = std::filesystem::current_path());

    /// Handles one client message. The reply starts with an ack followed by any
    /// payload messages, or is a single error.
    std::vector<nlohmann::json> handle(const nlohmann::json& message);

    /// Runs up to iters_per_frame iterations and returns the frame, or nothing
    /// when no session is loaded or the session is paused. A converged session
    /// with no pending change emits its last frame again without iterating.
    std::optional<nlohmann::json> tick();

    bool loaded() const { return m_solver != nullptr; }
    bool paused() const { return m_paused; }
    const Solver* solver() const { return m_solver.get(); }

    /// Document reproducing the current setup, and the matching export message.
    io::SessionDocument export_document() const;
    nlohmann::json export_message(const nlohmann::json& request_id) const;

private:
    std::vector<nlohmann::json> dispatch(const std::string& type, const nlohmann::json& message);
    void load(const nlohmann::json& message);
    void set_params(const nlohmann::json& message);
    void set_handles(const nlohmann::json& message);
    void drag_handles(const nlohmann::json& message);
    nlohmann::json topology_message() const;
    nlohmann::json frame_message() const;
    void require_loaded() const;

    std::filesystem::path m_base_dir;
    io::SessionDocument m_document;
    std::unique_ptr<Solver> m_solver;
    bool m_paused = false;
    bool m_idle = false;
    bool m_rest_changed = false;
    int m_last_factorizations = 0;
    IterationResiduals m_last_residuals;
    bool m_last_converged = false;
};

/// Message builders shared with the server.
nlohmann::json ack_message(const nlohmann::json& request_id);
nlohmann::json error_message(const nlohmann::json& request_id, const std::string& code, const std::string& message);

} // namespace localdeform::service
