#include "gms/service.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <thread>
#include <unordered_set>

#include "gms/daydream.hpp"
#include "gms/denoiser.hpp"

namespace gms {

Decision assess(int id, const Configuration& config, const ConditionClass& constraints) {
    const SkillLevel level = constraints.skill.value_or(SkillLevel::kModerate);
    const SkillProfile profile = SkillProfile::with_human_skill(level, config.types());
    const int target = constraints.capacity.value_or(0);

    Decision d;
    d.id = id;
    d.config = config;
    d.capacity = capacity(config, profile);
    Scenario scenario;
    scenario.skills = profile;
    scenario.demand = target;
    d.fitness = fitness(config, scenario);
    d.meets_capacity = d.capacity >= target;
    d.meets_max_machines = !constraints.max_machines || config.total_assets() <= *constraints.max_machines;
    // Humans at the requested level must still carry the line to the target.
    d.meets_skill = !constraints.skill || d.capacity >= target;
    return d;
}

bool decision_before(const Decision& a, const Decision& b) {
    if (a.fitness != b.fitness) return a.fitness > b.fitness;
    const int assets_a = a.config.total_assets();
    const int assets_b = b.config.total_assets();
    if (assets_a != assets_b) return assets_a < assets_b;
    return a.id < b.id;
}

nlohmann::json decision_json(const Decision& d) {
    return {
        {"id", d.id},
        {"config", d.config},
        {"capacity", d.capacity},
        {"fitness", d.fitness},
        {"total_assets", d.config.total_assets()},
        {"satisfies",
         {{"capacity", d.meets_capacity}, {"max_machines", d.meets_max_machines}, {"skill", d.meets_skill}}},
    };
}

namespace {

ApiError bad_request(const std::string& message, nlohmann::json detail = nullptr) {
    return ApiError(400, "bad_request", message, std::move(detail));
}

int int_field(const nlohmann::json& body, const char* key, int fallback, int lo, int hi) {
    if (!body.contains(key) || body[key].is_null()) return fallback;
    const auto& v = body[key];
    if (!v.is_number_integer()) throw bad_request(std::string("'") + key + "' must be an integer");
    const auto n = v.get<long long>();
    if (n < lo || n > hi) {
        throw bad_request(std::string("'") + key + "' must lie in [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
    }
    return static_cast<int>(n);
}

ConditionClass triple_field(const nlohmann::json& v) {
    if (v.is_string()) {
        auto c = parse_class_tuple(v.get<std::string>());
        if (!c) throw bad_request("'triple' is not of the form (capacity, skill, max_machines)", v);
        return *c;
    }
    if (v.is_object()) {
        try {
            ConditionClass c = v.get<ConditionClass>();
            c.validate();
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw bad_request(std::string("malformed 'triple': ") + e.what(), v);
        } catch (const InvalidInput& e) {
            throw bad_request(std::string("malformed 'triple': ") + e.what(), v);
        }
    }
    throw bad_request("'triple' must be a string or an object", v);
}

/// Steps T, 0.9T, ..., 0.1T, 0 unless the client lists its own.
std::vector<int> snapshot_steps(const nlohmann::json& v, int steps) {
    std::vector<int> out;
    if (v.is_boolean()) {
        if (!v.get<bool>()) return out;
        for (int k = 10; k >= 0; --k) out.push_back(steps * k / 10);
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
    if (!v.is_array()) throw bad_request("'snapshots' must be a boolean or a list of steps");
    std::set<int, std::greater<>> unique;
    for (const auto& e : v) {
        if (!e.is_number_integer() || e.get<long long>() < 0 || e.get<long long>() > steps) {
            throw bad_request("snapshot steps must be integers in [0, " + std::to_string(steps) + "]", v);
        }
        unique.insert(e.get<int>());
    }
    return {unique.begin(), unique.end()};
}

nlohmann::json block_rows(const std::vector<float>& grid, const GridCodec& codec) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < codec.types(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < codec.stations(); ++j) row.push_back(grid[static_cast<std::size_t>(i) * codec.size() + j]);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

Service::Service(ServiceConfig config) : config_(std::move(config)) {
    if (config_.oversample < 1) throw InvalidInput("oversample factor must be at least 1");
    if (config_.max_count < 1) throw InvalidInput("max_count must be at least 1");
    if (!config_.backend) config_.backend = std::make_shared<GrammarBackend>();
    if (config_.default_capacity) CapacityClass::bin(*config_.default_capacity);
    std::random_device rd;
    seed_base_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string Service::new_session_id() {
    thread_local Rng rng(mix_seed(seed_base_ ^ std::hash<std::thread::id>{}(std::this_thread::get_id())));
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                  static_cast<unsigned long long>(rng()));
    return buf;
}

void Service::purge_expired() {
    const auto now = std::chrono::steady_clock::now();
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        it = now - it->second.last_used > config_.session_ttl ? sessions_.erase(it) : std::next(it);
    }
}

std::size_t Service::session_count() {
    std::lock_guard lock(session_mutex_);
    purge_expired();
    return sessions_.size();
}

nlohmann::json Service::inquiry(const nlohmann::json& body) {
    if (!body.is_object()) throw bad_request("request body must be a JSON object");
    if (!body.contains("text") || !body["text"].is_string()) throw bad_request("'text' is required");
    const std::string text = body["text"].get<std::string>();
    std::optional<std::string> sid;
    if (body.contains("session_id") && !body["session_id"].is_null()) {
        if (!body["session_id"].is_string()) throw bad_request("'session_id' must be a string");
        sid = body["session_id"].get<std::string>();
    }

    // Fail fast on an unknown session before spending time on parsing.
    if (sid) {
        std::lock_guard lock(session_mutex_);
        purge_expired();
        if (!sessions_.count(*sid)) throw ApiError(404, "unknown_session", "unknown session " + *sid, *sid);
    }

    ConditionClass parsed;
    try {
        parsed = config_.backend->parse(text);
    } catch (const ParseError& e) {
        throw ApiError(400, "parse_error", e.what(), {{"text", e.text()}});
    } catch (const RemoteBackendError& e) {
        throw ApiError(502, "inquiry_backend", e.what(), {{"text", text}});
    }

    std::lock_guard lock(session_mutex_);
    purge_expired();
    if (!sid) {
        sid = new_session_id();
        sessions_[*sid] = {};
    }
    auto it = sessions_.find(*sid);
    if (it == sessions_.end()) throw ApiError(404, "unknown_session", "session expired during the request", *sid);
    Session& session = it->second;
    session.merged = merge(session.merged, parsed);
    session.history.push_back({text, parsed, {}});
    session.last_used = std::chrono::steady_clock::now();

    nlohmann::json out = session.merged;
    out["session_id"] = *sid;
    out["triple"] = format_class(session.merged);
    out["parsed"] = parsed;
    out["turns"] = session.history.size();
    return out;
}

nlohmann::json Service::sample(const nlohmann::json& body) {
    if (!body.is_object()) throw bad_request("request body must be a JSON object");
    // The snapshot is pinned for the whole request so a concurrent swap cannot split it.
    const std::shared_ptr<const DiffusionModel> model = this->model();
    if (!model) throw ApiError(409, "no_model", "no model is loaded");

    std::optional<std::string> sid;
    ConditionClass constraints;
    if (body.contains("triple") && !body["triple"].is_null()) {
        constraints = triple_field(body["triple"]);
    } else if (body.contains("session_id") && body["session_id"].is_string()) {
        sid = body["session_id"].get<std::string>();
        std::lock_guard lock(session_mutex_);
        purge_expired();
        auto it = sessions_.find(*sid);
        if (it == sessions_.end()) throw ApiError(404, "unknown_session", "unknown session " + *sid, *sid);
        it->second.last_used = std::chrono::steady_clock::now();
        constraints = it->second.merged;
    } else {
        throw bad_request("either 'session_id' or 'triple' is required");
    }
    if (!constraints.capacity) {
        if (!config_.default_capacity) {
            throw ApiError(422, "no_capacity", "the request has no capacity and no default is configured",
                           nlohmann::json(constraints));
        }
        constraints.capacity = config_.default_capacity;
    }

    const int count = int_field(body, "count", 5, 1, config_.max_count);
    double w = 2.0;
    if (body.contains("w") && !body["w"].is_null()) {
        if (!body["w"].is_number() || body["w"].get<double>() < 0.0) throw bad_request("'w' must be a non-negative number");
        w = body["w"].get<double>();
    }
    const std::uint64_t request_id = request_counter_.fetch_add(1);
    std::uint64_t seed = derive_seed(seed_base_, request_id);
    if (body.contains("seed") && !body["seed"].is_null()) {
        if (!body["seed"].is_number_unsigned() && !body["seed"].is_number_integer()) {
            throw bad_request("'seed' must be an integer");
        }
        seed = body["seed"].get<std::uint64_t>();
    }

    SampleRequest req;
    req.capacity = CapacityClass::bin(*constraints.capacity);
    req.w = w;
    req.count = count * config_.oversample;
    req.seed = seed;
    if (body.contains("snapshots") && !body["snapshots"].is_null()) {
        req.snapshot_steps = snapshot_steps(body["snapshots"], model->schedule.steps);
    }
    SampleResult result = gms::sample(*model, req);

    std::vector<Decision> survivors;
    std::unordered_set<Configuration, ConfigurationHash> seen;
    for (int k = 0; k < static_cast<int>(result.configs.size()); ++k) {
        Decision d = assess(k, result.configs[k], constraints);
        if (!d.meets_max_machines || !d.meets_skill) continue;
        if (!seen.insert(d.config).second) continue;
        survivors.push_back(std::move(d));
    }
    std::sort(survivors.begin(), survivors.end(), decision_before);
    if (static_cast<int>(survivors.size()) > count) survivors.resize(count);

    nlohmann::json out;
    out["triple"] = format_class(constraints);
    out["constraints"] = constraints;
    out["w"] = w;
    out["seed"] = seed;
    out["sampled"] = req.count;
    out["decisions"] = nlohmann::json::array();
    std::vector<int> ids;
    for (const auto& d : survivors) {
        out["decisions"].push_back(decision_json(d));
        ids.push_back(d.id);
    }
    if (survivors.empty()) {
        out["note"] = {{"code", "no_feasible_sample"},
                       {"message", "no feasible sample: none of the " + std::to_string(req.count) +
                                       " samples met the machine ceiling and skill constraints"}};
    }
    if (!req.snapshot_steps.empty()) {
        nlohmann::json snaps = nlohmann::json::array();
        for (int id : ids) {
            nlohmann::json frames = nlohmann::json::array();
            for (const auto& s : result.snapshots) {
                if (s.sample != id) continue;
                frames.push_back({{"t", s.t}, {"grid", block_rows(s.grid, model->codec)}});
            }
            snaps.push_back({{"decision_id", id}, {"frames", std::move(frames)}});
        }
        out["snapshots"] = {{"steps", req.snapshot_steps}, {"decisions", std::move(snaps)}};
    }

    if (sid) {
        std::lock_guard lock(session_mutex_);
        auto it = sessions_.find(*sid);
        if (it != sessions_.end() && !it->second.history.empty()) it->second.history.back().decision_ids = ids;
    }
    return out;
}

nlohmann::json Service::load_model(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("path") || !body["path"].is_string()) {
        throw bad_request("'path' is required");
    }
    const std::string path = body["path"].get<std::string>();
    nlohmann::json meta;
    std::shared_ptr<const DiffusionModel> loaded;
    try {
        loaded = std::make_shared<const DiffusionModel>(gms::load_model(path, &meta));
    } catch (const CheckpointError& e) {
        throw ApiError(400, "bad_checkpoint", e.what(), {{"path", path}, {"section", e.section()}});
    } catch (const IoError& e) {
        throw ApiError(400, "io_error", e.what(), {{"path", e.path()}});
    }
    set_model(std::move(loaded), std::move(meta), path);
    return model_descriptor();
}

void Service::set_model(std::shared_ptr<const DiffusionModel> model, nlohmann::json metadata, std::string source) {
    std::size_t parameters = 0;
    if (model) {
        // parameter_count() walks mutable parameter handles, so count on a copy.
        DenoiserModel copy = model->denoiser;
        parameters = copy.parameter_count();
    }
    Snapshot next{std::move(model), std::move(metadata), std::move(source), parameters};
    std::lock_guard lock(model_mutex_);
    std::swap(snapshot_, next);
}

std::shared_ptr<const DiffusionModel> Service::model() const {
    std::lock_guard lock(model_mutex_);
    return snapshot_.model;
}

nlohmann::json Service::model_descriptor() const {
    Snapshot snap;
    {
        std::lock_guard lock(model_mutex_);
        snap = snapshot_;
    }
    if (!snap.model) return nullptr;
    const auto& m = *snap.model;
    return {
        {"source", snap.source},
        {"parameters", snap.parameters},
        {"architecture", m.denoiser.architecture()},
        {"schedule", {{"T", m.schedule.steps}, {"beta0", m.schedule.beta0}, {"betaT", m.schedule.betaT}}},
        {"codec", {{"I", m.codec.types()}, {"J", m.codec.stations()}, {"C_max", m.codec.c_max()}, {"grid", m.codec.size()}}},
        {"metadata", snap.metadata},
    };
}

nlohmann::json Service::health() const {
    return {{"status", "ok"}, {"model", model_descriptor()}, {"inquiry_backend", config_.backend->descriptor().name}};
}

ApiResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) {
    try {
        nlohmann::json doc;
        if (method == "POST") {
            doc = nlohmann::json::parse(body, nullptr, false);
            if (doc.is_discarded()) throw ApiError(400, "bad_json", "request body is not valid JSON");
        }
        if (method == "POST" && path == "/api/inquiry") return {200, inquiry(doc)};
        if (method == "POST" && path == "/api/sample") return {200, sample(doc)};
        if (method == "POST" && path == "/api/model/load") return {200, load_model(doc)};
        if (method == "GET" && path == "/api/model") return {200, model_descriptor()};
        if (method == "GET" && path == "/api/health") return {200, health()};
        throw ApiError(404, "not_found", "no route for " + method + " " + path);
    } catch (const ApiError& e) {
        return {e.status(), e.body()};
    } catch (const InvalidInput& e) {
        return {400, {{"code", "bad_request"}, {"message", e.what()}, {"detail", nullptr}}};
    } catch (const std::exception& e) {
        return {500, {{"code", "internal"}, {"message", e.what()}, {"detail", nullptr}}};
    }
}

}  // namespace gms
