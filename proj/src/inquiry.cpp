#include "gms/inquiry.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <regex>

namespace gms {

void ConditionClass::validate() const {
    if (empty()) throw InvalidInput("condition class has no slot set");
    if (capacity && *capacity < 0) throw InvalidInput("capacity must be non-negative");
    if (max_machines && *max_machines < 0) throw InvalidInput("machine ceiling must be non-negative");
}

std::optional<CapacityClass> ConditionClass::capacity_class() const {
    if (!capacity) return std::nullopt;
    return CapacityClass::bin(*capacity);
}

ConditionClass merge(const ConditionClass& base, const ConditionClass& update) {
    ConditionClass out = base;
    if (update.capacity) out.capacity = update.capacity;
    if (update.skill) out.skill = update.skill;
    if (update.max_machines) out.max_machines = update.max_machines;
    return out;
}

std::string format_class(const ConditionClass& c) {
    auto slot = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("None"); };
    const std::string skill = c.skill ? std::string(to_string(*c.skill)) : "None";
    return "(" + slot(c.capacity) + ", " + skill + ", " + slot(c.max_machines) + ")";
}

std::optional<ConditionClass> parse_class_tuple(std::string_view text) {
    static const std::regex tuple(R"(\(\s*(none|\d+)\s*,\s*(none|high|moderate|medium|low)\s*,\s*(none|\d+)\s*\))",
                                  std::regex::icase);
    std::cmatch m;
    if (!std::regex_search(text.data(), text.data() + text.size(), m, tuple)) return std::nullopt;
    auto number = [](const std::string& s) -> std::optional<int> {
        if (s.size() == 4 && std::tolower(static_cast<unsigned char>(s[0])) == 'n') return std::nullopt;
        if (s.size() > 9) return -1;
        return std::stoi(s);
    };
    ConditionClass c;
    c.capacity = number(m[1].str());
    c.max_machines = number(m[3].str());
    std::string skill = m[2].str();
    std::transform(skill.begin(), skill.end(), skill.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (skill != "none") c.skill = parse_skill_level(skill);
    if (c.empty() || (c.capacity && *c.capacity < 0) || (c.max_machines && *c.max_machines < 0)) return std::nullopt;
    return c;
}

std::string to_sentence(const ConditionClass& c) {
    std::vector<std::string> parts;
    if (c.capacity) parts.push_back("a minimal capacity of " + std::to_string(*c.capacity) + " part/hour");
    if (c.skill) parts.push_back(std::string(to_string(*c.skill)) + " skill workers");
    if (c.max_machines) parts.push_back("no more than " + std::to_string(*c.max_machines) + " machines");
    std::string out = "I need a production line with ";
    for (std::size_t k = 0; k < parts.size(); ++k) {
        if (k) out += ", ";
        out += parts[k];
    }
    return out + ".";
}

void to_json(nlohmann::json& j, const ConditionClass& c) {
    j = nlohmann::json{{"capacity", nullptr}, {"skill", nullptr}, {"max_machines", nullptr}};
    if (c.capacity) j["capacity"] = *c.capacity;
    if (c.skill) j["skill"] = std::string(to_string(*c.skill));
    if (c.max_machines) j["max_machines"] = *c.max_machines;
}

void from_json(const nlohmann::json& j, ConditionClass& c) {
    c = {};
    if (j.contains("capacity") && !j["capacity"].is_null()) c.capacity = j["capacity"].get<int>();
    if (j.contains("max_machines") && !j["max_machines"].is_null()) c.max_machines = j["max_machines"].get<int>();
    if (j.contains("skill") && !j["skill"].is_null()) {
        auto level = parse_skill_level(j["skill"].get<std::string>());
        if (!level) throw InvalidInput("unknown skill level '" + j["skill"].get<std::string>() + "'");
        c.skill = level;
    }
}

namespace {

constexpr std::array<const char*, 21> kNumberWords = {
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty"};

std::string normalize(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    static const std::regex thousands(R"((\d),(\d{3})\b)");
    s = std::regex_replace(s, thousands, "$1$2");

    static const std::regex too_big(
        R"(\b(twenty[\s-]+(one|two|three|four|five|six|seven|eight|nine)|thirty|forty|fifty|sixty|seventy|eighty|ninety|hundred|thousand)\b)");
    if (std::regex_search(s, too_big)) {
        throw ParseError("numbers written as words are only understood up to twenty", std::string(text));
    }
    for (std::size_t k = 0; k < kNumberWords.size(); ++k) {
        const std::regex word(std::string(R"(\b)") + kNumberWords[k] + R"(\b)");
        s = std::regex_replace(s, word, std::to_string(k));
    }
    return s;
}

std::optional<int> to_int(const std::string& digits) {
    if (digits.size() > 9) return std::nullopt;
    return std::stoi(digits);
}

std::optional<int> find_capacity(const std::string& s) {
    static const std::array<std::regex, 3> patterns = {
        std::regex(R"((\d+)\s*(?:parts?|units?|pieces?|pcs|products?|items?)?\s*(?:/|per|an|a|every|each)\s*(?:hour|hr|h)\b)"),
        std::regex(R"((\d+)\s*(?:pph|uph|p/h)\b)"),
        std::regex(R"(\b(?:capacity|throughput|output|production rate)\s*(?:(?:of|is|at|least|around|about|minimum|min)\s+|[:=]\s*)*(\d+))"),
    };
    for (const auto& re : patterns) {
        std::smatch m;
        if (std::regex_search(s, m, re)) return to_int(m[1].str());
    }
    return std::nullopt;
}

std::optional<int> find_machine_ceiling(const std::string& s, std::string_view original) {
    static const std::string qual =
        R"((no more than|not more than|no greater than|not exceeding|at most|up to|a maximum of|maximum of|max of|maximum|max|limit of|limited to|capped at|fewer than|less than))";
    static const std::regex qualified(qual + R"(\s+(\d+)\s+(?:[a-z]+\s+)?machines?\b)");
    static const std::regex trailing(R"(\bmachines?(?:\s+count)?\s+(?:of\s+)?)" + qual + R"(\s+(\d+))");
    static const std::regex bare(R"((\d+)\s+(?:[a-z]+\s+)?machines?\b)");
    std::smatch m;
    auto ceiling = [&](const std::string& q, const std::string& digits) -> std::optional<int> {
        auto n = to_int(digits);
        if (!n) return std::nullopt;
        if (q == "fewer than" || q == "less than") {
            if (*n == 0) throw ParseError("a machine ceiling below zero cannot be met", std::string(original));
            return *n - 1;
        }
        return n;
    };
    if (std::regex_search(s, m, qualified)) return ceiling(m[1].str(), m[2].str());
    if (std::regex_search(s, m, trailing)) return ceiling(m[1].str(), m[2].str());
    if (std::regex_search(s, m, bare)) return to_int(m[1].str());
    return std::nullopt;
}

std::optional<SkillLevel> find_skill(const std::string& s) {
    static const std::regex before(R"(\b(high|highly|moderate|moderately|medium|low)[\s-]+skill(?:s|ed)?\b)");
    static const std::regex after(R"(\bskills?(?:\s+level)?\s*(?:is\s+|of\s+|[:=]\s*)?(high|moderate|medium|low)\b)");
    static const std::regex unskilled(R"(\bunskilled\b)");
    std::smatch m;
    std::string word;
    if (std::regex_search(s, m, before) || std::regex_search(s, m, after)) {
        word = m[1].str();
    } else if (std::regex_search(s, unskilled)) {
        word = "low";
    } else {
        return std::nullopt;
    }
    if (word == "highly") word = "high";
    if (word == "moderately") word = "moderate";
    return parse_skill_level(word);
}

}  // namespace

ConditionClass parse_inquiry(std::string_view text) {
    if (std::all_of(text.begin(), text.end(), [](unsigned char ch) { return std::isspace(ch); })) {
        throw ParseError("inquiry is empty", std::string(text));
    }
    const std::string s = normalize(text);
    ConditionClass c;
    c.capacity = find_capacity(s);
    c.max_machines = find_machine_ceiling(s, text);
    c.skill = find_skill(s);
    if (c.empty()) {
        throw ParseError("no capacity, skill or machine requirement found in \"" + std::string(text) + "\"",
                         std::string(text));
    }
    return c;
}

RemoteConfig RemoteConfig::from_env() {
    RemoteConfig cfg;
    if (const char* v = std::getenv("GMS_INQUIRY_ENDPOINT")) cfg.endpoint = v;
    if (const char* v = std::getenv("GMS_INQUIRY_API_KEY")) cfg.api_key = v;
    if (const char* v = std::getenv("GMS_INQUIRY_MODEL")) cfg.model = v;
    if (const char* v = std::getenv("GMS_INQUIRY_TIMEOUT_MS")) {
        char* end = nullptr;
        const long ms = std::strtol(v, &end, 10);
        if (end == v || *end != '\0' || ms <= 0) throw InvalidInput("GMS_INQUIRY_TIMEOUT_MS must be a positive integer");
        cfg.timeout_ms = static_cast<int>(ms);
    }
    return cfg;
}

std::string remote_prompt() {
    return "Extract the manufacturing requirements from the user's inquiry as a tuple "
           "(capacity, skill, max_machines). capacity is the required throughput in parts per hour, "
           "skill is one of high, moderate or low, max_machines is the largest allowed machine count. "
           "Write None for anything the inquiry does not mention. Reply with the tuple only, "
           "for example (240, None, 9).";
}

std::string remote_request_body(const RemoteConfig& config, std::string_view text) {
    nlohmann::json body = {
        {"model", config.model},
        {"temperature", 0},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", remote_prompt()}},
                                {{"role", "user"}, {"content", std::string(text)}}})},
    };
    return body.dump();
}

namespace {

ConditionClass ask_remote(HttpTransport& transport, const RemoteConfig& config, std::string_view text) {
    if (config.endpoint.empty()) throw RemoteBackendError("no remote inquiry endpoint configured");
    HttpResponse response;
    try {
        response = transport.post(config.endpoint, config.api_key, remote_request_body(config, text), config.timeout_ms);
    } catch (const TransportError& e) {
        throw RemoteBackendError(std::string("remote inquiry request failed: ") + e.what());
    }
    if (response.status != 200) {
        throw RemoteBackendError("remote inquiry endpoint answered HTTP " + std::to_string(response.status));
    }
    std::string content = response.body;
    auto doc = nlohmann::json::parse(response.body, nullptr, false);
    if (!doc.is_discarded() && doc.is_object() && doc.contains("choices")) {
        try {
            content = doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw RemoteBackendError(std::string("malformed remote response: ") + e.what());
        }
    }
    auto triple = parse_class_tuple(content);
    if (!triple) throw RemoteBackendError("malformed remote response: no valid (capacity, skill, machines) tuple");
    return *triple;
}

}  // namespace

RemoteParseResult remote_parse(HttpTransport& transport, const RemoteConfig& config, std::string_view text) {
    try {
        return {ask_remote(transport, config, text), false, {}};
    } catch (const RemoteBackendError& e) {
        if (!config.fallback) throw;
        try {
            return {parse_inquiry(text), true, e.what()};
        } catch (const ParseError& pe) {
            throw RemoteBackendError(std::string(e.what()) + "; grammar fallback failed: " + pe.what());
        }
    }
}

}  // namespace gms
