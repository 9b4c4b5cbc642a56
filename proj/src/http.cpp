#include "gms/http.hpp"

#include <regex>

#include <httplib.h>

namespace gms {

struct HttpServer::Impl {
    Service& service;
    ServerOptions options;
    httplib::Server server;

    Impl(Service& s, ServerOptions o) : service(s), options(std::move(o)) {}

    void add_cors(httplib::Response& res) const {
        res.set_header("Access-Control-Allow-Origin", options.cors_origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }

    void route(const httplib::Request& req, httplib::Response& res) {
        const ApiResponse out = service.handle(req.method, req.path, req.body);
        res.status = out.status;
        res.set_content(out.body.dump(), "application/json");
        add_cors(res);
    }
};

HttpServer::HttpServer(Service& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
    auto& s = impl_->server;
    Impl* impl = impl_.get();
    const int threads = std::max(1, impl->options.threads);
    s.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    // The library default adds SO_REUSEPORT, which lets a second server share a busy port.
    s.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
    });
    auto handler = [impl](const httplib::Request& req, httplib::Response& res) { impl->route(req, res); };
    s.Get(R"(/api/.*)", handler);
    s.Post(R"(/api/.*)", handler);
    s.Options(R"(/api/.*)", [impl](const httplib::Request&, httplib::Response& res) {
        res.status = 204;
        impl->add_cors(res);
    });
    if (!impl->options.ui_dir.empty() && !s.set_mount_point("/", impl->options.ui_dir)) {
        throw IoError("UI directory is not readable", impl->options.ui_dir);
    }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
    auto& o = impl_->options;
    if (o.port == 0) {
        port_ = impl_->server.bind_to_any_port(o.host);
    } else {
        port_ = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
    }
    if (port_ < 0) throw IoError("cannot bind HTTP server", o.host + ":" + std::to_string(o.port));
    return port_;
}

void HttpServer::run() {
    if (port_ < 0) bind();
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool transport_supports_tls() {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
    return true;
#else
    return false;
#endif
}

HttpResponse HttplibTransport::post(const std::string& url, const std::string& bearer_token, const std::string& body,
                                    int timeout_ms) {
    static const std::regex split(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, split)) throw TransportError("unsupported endpoint URL: " + url);
    if (url.rfind("https://", 0) == 0 && !transport_supports_tls()) {
        throw TransportError("https endpoints need a build with OpenSSL");
    }
    httplib::Client client(m[1].str());
    const time_t sec = timeout_ms / 1000;
    const time_t usec = (timeout_ms % 1000) * 1000;
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
    const std::string path = m[2].matched ? m[2].str() : "/";
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) throw TransportError("request to " + url + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
}

}  // namespace gms
