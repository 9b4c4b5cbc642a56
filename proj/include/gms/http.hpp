#pragma once

#include <memory>
#include <string>

#include "gms/inquiry.hpp"
#include "gms/service.hpp"

namespace gms {

struct ServerOptions {
    std::string host = "127.0.0.1";
    /// 0 binds an ephemeral port.
    int port = 8080;
    /// Static UI assets served at "/" when non-empty.
    std::string ui_dir;
    std::string cors_origin = "*";
    int threads = 8;
};

/// JSON API under /api plus optional static hosting.
class HttpServer {
public:
    HttpServer(Service& service, ServerOptions options);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds the socket and returns the port. Throws IoError on failure.
    int bind();
    /// Blocks until stop() is called.
    void run();
    void stop();
    int port() const noexcept { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = -1;
};

/// POST over http:// (and https:// when built with OpenSSL).
class HttplibTransport final : public HttpTransport {
public:
    HttpResponse post(const std::string& url, const std::string& bearer_token, const std::string& body,
                      int timeout_ms) override;
};

/// True when https endpoints can be reached.
bool transport_supports_tls();

}  // namespace gms
