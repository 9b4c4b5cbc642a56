#include "gms/domain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "gms/error.hpp"

namespace gms {

Configuration::Configuration(int types, int stations)
    : Configuration(types, stations,
                    std::vector<int>(static_cast<std::size_t>(std::max(types, 0)) *
                                     std::max(stations, 0))) {}

Configuration::Configuration(int types, int stations, std::vector<int> counts)
    : types_(types), stations_(stations), counts_(std::move(counts)) {
    if (types <= 0 || stations <= 0) {
        throw InvalidInput("configuration dimensions must be positive");
    }
    if (counts_.size() != static_cast<std::size_t>(types) * stations) {
        throw InvalidInput("configuration has " + std::to_string(counts_.size()) +
                           " counts, expected " + std::to_string(types * stations));
    }
    if (std::any_of(counts_.begin(), counts_.end(), [](int c) { return c < 0; })) {
        throw InvalidInput("configuration counts must be non-negative");
    }
}

int Configuration::type_total(int type) const {
    auto first = counts_.begin() + static_cast<std::ptrdiff_t>(index(type, 0));
    return std::accumulate(first, first + stations_, 0);
}

int Configuration::total_assets() const {
    return std::accumulate(counts_.begin(), counts_.end(), 0);
}

bool Configuration::within(int c_max) const {
    return std::all_of(counts_.begin(), counts_.end(),
                       [c_max](int c) { return c >= 0 && c <= c_max; });
}

std::size_t ConfigurationHash::operator()(const Configuration& config) const noexcept {
    std::size_t h = 0xcbf29ce484222325ULL ^ static_cast<std::size_t>(config.types() * 131 +
                                                                     config.stations());
    for (int c : config.counts()) {
        h ^= static_cast<std::size_t>(c) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
}

double skill_rate(SkillLevel level) {
    switch (level) {
        case SkillLevel::kHigh: return 120.0;
        case SkillLevel::kModerate: return 60.0;
        case SkillLevel::kLow: return 0.0;
    }
    return 0.0;
}

std::string_view to_string(SkillLevel level) {
    switch (level) {
        case SkillLevel::kHigh: return "high";
        case SkillLevel::kModerate: return "moderate";
        case SkillLevel::kLow: return "low";
    }
    return "unknown";
}

std::optional<SkillLevel> parse_skill_level(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "high") return SkillLevel::kHigh;
    if (s == "moderate" || s == "medium") return SkillLevel::kModerate;
    if (s == "low") return SkillLevel::kLow;
    return std::nullopt;
}

SkillProfile SkillProfile::with_human_skill(SkillLevel level, int types) {
    SkillProfile profile;
    profile.machine_types = std::max(0, types - kHumanTypes);
    profile.rates.assign(static_cast<std::size_t>(types), kMachineRate);
    for (int i = profile.machine_types; i < types; ++i) {
        profile.rates[static_cast<std::size_t>(i)] = skill_rate(level);
    }
    return profile;
}

SkillProfile SkillProfile::uniform(int types, double rate) {
    SkillProfile profile;
    profile.machine_types = types;
    profile.rates.assign(static_cast<std::size_t>(types), rate);
    return profile;
}

void SkillProfile::validate() const {
    for (double r : rates) {
        if (!(r >= 0.0) || !std::isfinite(r)) {
            throw InvalidInput("skill rates must be finite and non-negative");
        }
    }
}

CapacityClass::CapacityClass(int value) : value_(value) {
    if (value < 0 || value > kCapacityMax || value % kCapacityStep != 0) {
        throw InvalidInput("capacity class must be a multiple of 30 in [0, 300], got " +
                           std::to_string(value));
    }
}

CapacityClass CapacityClass::bin(double throughput) {
    if (!(throughput > 0.0)) return CapacityClass(0);
    double clipped = std::min(throughput, static_cast<double>(kCapacityMax));
    int floored = static_cast<int>(std::floor(clipped / kCapacityStep + 1e-9)) * kCapacityStep;
    return CapacityClass(floored);
}

CapacityClass CapacityClass::from_index(int index) {
    if (index < 0 || index >= kCapacityClassCount) {
        throw InvalidInput("capacity class index out of range: " + std::to_string(index));
    }
    return CapacityClass(index * kCapacityStep);
}

std::vector<CapacityClass> CapacityClass::all() {
    std::vector<CapacityClass> out;
    for (int i = 0; i < kCapacityClassCount; ++i) out.push_back(from_index(i));
    return out;
}

double bottleneck_throughput(const Configuration& config, const SkillProfile& skills) {
    if (skills.types() != config.types()) {
        throw InvalidInput("skill profile covers " + std::to_string(skills.types()) +
                           " asset types, configuration has " +
                           std::to_string(config.types()));
    }
    double bottleneck = std::numeric_limits<double>::infinity();
    for (int i = 0; i < config.types(); ++i) {
        bottleneck = std::min(bottleneck,
                              config.type_total(i) * skills.rates[static_cast<std::size_t>(i)]);
    }
    return bottleneck;
}

int capacity(const Configuration& config, const SkillProfile& skills) {
    return CapacityClass::bin(bottleneck_throughput(config, skills)).value();
}

CapacityClass capacity_class(const Configuration& config, const SkillProfile& skills) {
    return CapacityClass(capacity(config, skills));
}

GridCodec::GridCodec(int types, int stations, int c_max, int size)
    : types_(types), stations_(stations), c_max_(c_max), size_(size) {
    if (types <= 0 || stations <= 0 || c_max <= 0) {
        throw InvalidInput("codec dimensions and c_max must be positive");
    }
    if (types > size || stations > size) {
        throw InvalidInput("configuration " + std::to_string(types) + "x" +
                           std::to_string(stations) + " does not fit a " +
                           std::to_string(size) + "x" + std::to_string(size) + " grid");
    }
}

int GridCodec::decode_value(double value) const {
    if (!std::isfinite(value)) return value > 0 ? c_max_ : 0;
    long k = std::lround((value + 1.0) * 0.5 * c_max_);
    return static_cast<int>(std::clamp<long>(k, 0, c_max_));
}

PaddedGrid GridCodec::encode(const Configuration& config) const {
    if (config.types() != types_ || config.stations() != stations_) {
        throw InvalidInput("configuration is " + std::to_string(config.types()) + "x" +
                           std::to_string(config.stations()) + ", codec expects " +
                           std::to_string(types_) + "x" + std::to_string(stations_));
    }
    if (!config.within(c_max_)) {
        throw InvalidInput("configuration count exceeds c_max " + std::to_string(c_max_));
    }
    PaddedGrid grid{size_, types_, stations_,
                    std::vector<float>(static_cast<std::size_t>(size_) * size_, -1.0f)};
    for (int i = 0; i < types_; ++i) {
        for (int j = 0; j < stations_; ++j) grid.at(i, j) = encode_count(config.at(i, j));
    }
    return grid;
}

Configuration GridCodec::decode(const PaddedGrid& grid) const {
    if (grid.size != size_ ||
        grid.values.size() != static_cast<std::size_t>(size_) * size_) {
        throw InvalidInput("grid is not " + std::to_string(size_) + "x" + std::to_string(size_));
    }
    return decode(grid.values.data());
}

Configuration GridCodec::decode(const float* values) const {
    Configuration config(types_, stations_);
    for (int i = 0; i < types_; ++i) {
        for (int j = 0; j < stations_; ++j) {
            config.at(i, j) = decode_value(values[static_cast<std::size_t>(i) * size_ + j]);
        }
    }
    return config;
}

void GridCodec::clamp_padding(float* values) const {
    for (int r = 0; r < size_; ++r) {
        for (int c = 0; c < size_; ++c) {
            if (r >= types_ || c >= stations_) values[static_cast<std::size_t>(r) * size_ + c] = -1.0f;
        }
    }
}

void to_json(nlohmann::json& j, const Configuration& config) {
    j = nlohmann::json{{"i", config.types()}, {"j", config.stations()}, {"counts", config.counts()}};
}

void from_json(const nlohmann::json& j, Configuration& config) {
    if (!j.is_object() || !j.contains("i") || !j.contains("j") || !j.contains("counts")) {
        throw InvalidInput("configuration JSON needs fields i, j, counts");
    }
    try {
        config = Configuration(j.at("i").get<int>(), j.at("j").get<int>(),
                               j.at("counts").get<std::vector<int>>());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed configuration JSON: ") + e.what());
    }
}

}  // namespace gms
