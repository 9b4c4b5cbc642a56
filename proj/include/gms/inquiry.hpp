#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "gms/domain.hpp"
#include "gms/error.hpp"

namespace gms {

/// Requirements extracted from an inquiry: (capacity, skill, max machines).
struct ConditionClass {
    std::optional<int> capacity;
    std::optional<SkillLevel> skill;
    std::optional<int> max_machines;

    bool empty() const noexcept { return !capacity && !skill && !max_machines; }
    /// Throws InvalidInput when every slot is absent or a count is negative.
    void validate() const;
    /// Capacity slot binned onto the class grid.
    std::optional<CapacityClass> capacity_class() const;

    bool operator==(const ConditionClass&) const = default;
};

/// Slots present in `update` replace those in `base`.
ConditionClass merge(const ConditionClass& base, const ConditionClass& update);

/// "(240, None, 9)".
std::string format_class(const ConditionClass& c);

/// Parses the tuple form produced by format_class; skill also accepts "medium".
std::optional<ConditionClass> parse_class_tuple(std::string_view text);

/// A plain-English request that parse_inquiry maps back to `c`.
std::string to_sentence(const ConditionClass& c);

void to_json(nlohmann::json& j, const ConditionClass& c);
void from_json(const nlohmann::json& j, ConditionClass& c);

class ParseError : public InvalidInput {
public:
    ParseError(const std::string& what, std::string text) : InvalidInput(what), text_(std::move(text)) {}
    const std::string& text() const noexcept { return text_; }

private:
    std::string text_;
};

/// Rule-based extraction of capacity ("240 part/hour", "240 parts per hour",
/// "240 pph", "capacity of 240"), machine ceilings ("no more than 9 machines",
/// "at most", "up to", "maximum of", "fewer than") and skill mentions
/// ("high skill", "low-skilled", "skill level moderate"). Number words up to
/// twenty are understood. Throws ParseError when nothing is recognized.
ConditionClass parse_inquiry(std::string_view text);

struct BackendDescriptor {
    std::string name;
    bool remote = false;
};

class InquiryBackend {
public:
    virtual ~InquiryBackend() = default;
    virtual ConditionClass parse(std::string_view text) = 0;
    virtual BackendDescriptor descriptor() const = 0;
};

class GrammarBackend final : public InquiryBackend {
public:
    ConditionClass parse(std::string_view text) override { return parse_inquiry(text); }
    BackendDescriptor descriptor() const override { return {"grammar", false}; }
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

class TransportError : public Error {
public:
    using Error::Error;
};

/// Minimal POST transport; implementations throw TransportError on network failure or timeout.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& url, const std::string& bearer_token, const std::string& body,
                              int timeout_ms) = 0;
};

struct RemoteConfig {
    std::string endpoint;
    std::string api_key;
    std::string model = "gpt-4o-mini";
    int timeout_ms = 10000;
    bool fallback = true;

    /// GMS_INQUIRY_ENDPOINT, GMS_INQUIRY_API_KEY, GMS_INQUIRY_MODEL, GMS_INQUIRY_TIMEOUT_MS.
    static RemoteConfig from_env();
};

class RemoteBackendError : public Error {
public:
    RemoteBackendError(const std::string& what, std::optional<ConditionClass> fallback = std::nullopt)
        : Error(what), fallback_(std::move(fallback)) {}
    const std::optional<ConditionClass>& fallback() const noexcept { return fallback_; }

private:
    std::optional<ConditionClass> fallback_;
};

struct RemoteParseResult {
    ConditionClass triple;
    bool from_fallback = false;
    /// Why the remote answer was not used (empty when it was).
    std::string remote_error;
};

/// The instruction sent ahead of the inquiry text.
std::string remote_prompt();

/// Chat-completions request body for `text`.
std::string remote_request_body(const RemoteConfig& config, std::string_view text);

/// Sends the inquiry and validates the returned tuple. On failure the grammar
/// result is used when fallback is enabled; otherwise RemoteBackendError.
RemoteParseResult remote_parse(HttpTransport& transport, const RemoteConfig& config, std::string_view text);

class RemoteBackend final : public InquiryBackend {
public:
    RemoteBackend(RemoteConfig config, std::shared_ptr<HttpTransport> transport)
        : config_(std::move(config)), transport_(std::move(transport)) {}

    ConditionClass parse(std::string_view text) override { return remote_parse(*transport_, config_, text).triple; }
    BackendDescriptor descriptor() const override { return {"remote:" + config_.model, true}; }

private:
    RemoteConfig config_;
    std::shared_ptr<HttpTransport> transport_;
};

}  // namespace gms
