#pragma once

#include <filesystem>
#include <memory>
#include <string>

namespace localdeform::service {

struct ServerOptions
{
    std::string address = "127.0.0.1";
    /// 0 picks a free port; port() reports the bound one.
    unsigned short port = 8765;
    /// Interval between solver ticks of each session.
    int tick_ms = 16;
    std::filesystem::path base_dir = std::filesystem::current_path();
    /// Stop on SIGINT and SIGTERM.
    bool handle_signals = false;
};

/// Websocket host. Every connection owns one Session whose messages and ticks
/// run on that connection's strand, so sessions never share mutable state.
class Server
{
public:
    explicit Server(ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const;
    /// Serves until stop() is called.
    void run();
    /// Safe to call from any thread.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> m_impl;
};

} // namespace localdeform::service
