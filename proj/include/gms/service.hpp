#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gms/diffusion.hpp"
#include "gms/inquiry.hpp"

namespace gms {

/// Error surfaced to API clients as {code, message, detail} with an HTTP status.
class ApiError : public Error {
public:
    ApiError(int status, std::string code, const std::string& message, nlohmann::json detail = nullptr)
        : Error(message), status_(status), code_(std::move(code)), detail_(std::move(detail)) {}

    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }
    const nlohmann::json& detail() const noexcept { return detail_; }
    nlohmann::json body() const { return {{"code", code_}, {"message", what()}, {"detail", detail_}}; }

private:
    int status_;
    std::string code_;
    nlohmann::json detail_;
};

struct ServiceConfig {
    int oversample = 4;
    int max_count = 100;
    std::chrono::seconds session_ttl{3600};
    /// Used when a request carries no capacity slot.
    std::optional<int> default_capacity;
    std::shared_ptr<InquiryBackend> backend = std::make_shared<GrammarBackend>();
};

struct Decision {
    int id = 0;
    Configuration config;
    int capacity = 0;
    double fitness = 0.0;
    bool meets_capacity = false;
    bool meets_max_machines = true;
    bool meets_skill = true;
};

/// Evaluates one sampled configuration against the merged constraints.
/// Capacity and fitness use the requested skill level (moderate when absent).
Decision assess(int id, const Configuration& config, const ConditionClass& constraints);

/// Non-increasing fitness, then fewer assets, then lower id.
bool decision_before(const Decision& a, const Decision& b);

nlohmann::json decision_json(const Decision& d);

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

/// Endpoint logic shared by the HTTP server and tests.
class Service {
public:
    explicit Service(ServiceConfig config = {});

    nlohmann::json inquiry(const nlohmann::json& body);
    nlohmann::json sample(const nlohmann::json& body);
    nlohmann::json load_model(const nlohmann::json& body);
    nlohmann::json model_descriptor() const;
    nlohmann::json health() const;

    /// Installs a model snapshot; requests already running keep the old one.
    void set_model(std::shared_ptr<const DiffusionModel> model, nlohmann::json metadata, std::string source);
    std::shared_ptr<const DiffusionModel> model() const;

    /// Routes "/api/..." requests; ApiError and malformed JSON become error bodies.
    ApiResponse handle(const std::string& method, const std::string& path, const std::string& body);

    std::size_t session_count();

private:
    struct Turn {
        std::string text;
        ConditionClass parsed;
        std::vector<int> decision_ids;
    };
    struct Session {
        ConditionClass merged;
        std::vector<Turn> history;
        std::chrono::steady_clock::time_point last_used;
    };
    struct Snapshot {
        std::shared_ptr<const DiffusionModel> model;
        nlohmann::json metadata;
        std::string source;
        std::size_t parameters = 0;
    };

    void purge_expired();
    std::string new_session_id();

    ServiceConfig config_;
    mutable std::mutex model_mutex_;
    Snapshot snapshot_;
    std::mutex session_mutex_;
    std::map<std::string, Session> sessions_;
    std::atomic<std::uint64_t> request_counter_{0};
    std::uint64_t seed_base_;
};

}  // namespace gms
