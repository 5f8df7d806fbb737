#include <localdeform/server.hpp>
#include <localdeform/session.hpp>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <spdlog/spdlog.h>

#include <chrono>
#include <csignal>
#include <deque>
#include <optional>

namespace localdeform::service {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

// Outgoing frames beyond this many queued messages are dropped for slow clients.
constexpr size_t kMaxQueuedFrames = 4;

class Connection : public std::enable_shared_from_this<Connection>
{
public:
    Connection(tcp::socket socket, const ServerOptions& options)
        : m_ws(std::move(socket))
        , m_timer(m_ws.get_executor())
        , m_session(options.base_dir)
        , m_tick(std::chrono::milliseconds(options.tick_ms))
    {}

    void start()
    {
        net::dispatch(m_ws.get_executor(), [self = shared_from_this()] { self->accept(); });
    }

private:
    void accept()
    {
        m_ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        m_ws.async_accept([self = shared_from_this()](beast::error_code ec) {
            if (ec) return spdlog::warn("websocket handshake failed: {}", ec.message());
            spdlog::info("client connected");
            self->read();
            self->schedule_tick();
        });
    }

    void read()
    {
        m_ws.async_read(m_buffer, [self = shared_from_this()](beast::error_code ec, size_t) {
            if (ec) return self->close(ec);
            const std::string text = beast::buffers_to_string(self->m_buffer.data());
            self->m_buffer.consume(self->m_buffer.size());
            self->on_message(text);
            self->read();
        });
    }

    void on_message(const std::string& text)
    {
        json message;
        try {
            message = json::parse(text);
        } catch (const json::parse_error& e) {
            send(error_message(nullptr, "ParseError", e.what()).dump());
            return;
        }
        for (const json& reply : m_session.handle(message)) send(reply.dump());
    }

    void schedule_tick()
    {
        m_timer.expires_after(m_tick);
        m_timer.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (ec || self->m_closed) return;
            self->on_tick();
            self->schedule_tick();
        });
    }

    void on_tick()
    {
        std::optional<json> frame;
        try {
            frame = m_session.tick();
        } catch (const std::exception& e) {
            send(error_message(nullptr, "SolverError", e.what()).dump());
            return;
        }
        if (!frame || *frame == m_last_frame) return;
        if (m_outbox.size() >= kMaxQueuedFrames) return;
        m_last_frame = *frame;
        send(frame->dump());
    }

    void send(std::string text)
    {
        m_outbox.push_back(std::move(text));
        if (m_outbox.size() == 1) write_next();
    }

    void write_next()
    {
        m_ws.text(true);
        m_ws.async_write(net::buffer(m_outbox.front()), [self = shared_from_this()](beast::error_code ec, size_t) {
            if (ec) return self->close(ec);
            self->m_outbox.pop_front();
            if (!self->m_outbox.empty()) self->write_next();
        });
    }

    void close(beast::error_code ec)
    {
        if (m_closed) return;
        m_closed = true;
        m_timer.cancel();
        if (ec != websocket::error::closed) spdlog::debug("connection ended: {}", ec.message());
        spdlog::info("client disconnected");
    }

    websocket::stream<beast::tcp_stream> m_ws;
    net::steady_timer m_timer;
    beast::flat_buffer m_buffer;
    std::deque<std::string> m_outbox;
    Session m_session;
    std::chrono::milliseconds m_tick;
    json m_last_frame;
    bool m_closed = false;
};

} // namespace

struct Server::Impl
{
    explicit Impl(ServerOptions opts) : options(std::move(opts)), acceptor(ioc)
    {
        const tcp::endpoint endpoint(net::ip::make_address(options.address), options.port);
        acceptor.open(endpoint.protocol());
        acceptor.set_option(net::socket_base::reuse_address(true));
        acceptor.bind(endpoint);
        acceptor.listen(net::socket_base::max_listen_connections);
    }

    void accept()
    {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) {
                if (ec != net::error::operation_aborted) spdlog::warn("accept failed: {}", ec.message());
                return;
            }
            std::make_shared<Connection>(std::move(socket), options)->start();
            accept();
        });
    }

    ServerOptions options;
    net::io_context ioc;
    tcp::acceptor acceptor;
};

Server::Server(ServerOptions options) : m_impl(std::make_unique<Impl>(std::move(options))) {}

Server::~Server() = default;

unsigned short Server::port() const
{
    return m_impl->acceptor.local_endpoint().port();
}

void Server::run()
{
    spdlog::info("listening on ws://{}:{}", m_impl->options.address, port());
    std::optional<net::signal_set> signals;
    if (m_impl->options.handle_signals) {
        signals.emplace(m_impl->ioc, SIGINT, SIGTERM);
        signals->async_wait([this](beast::error_code, int) { stop(); });
    }
    m_impl->accept();
    m_impl->ioc.run();
}

void Server::stop()
{
    m_impl->ioc.stop();
}

} // namespace localdeform::service
