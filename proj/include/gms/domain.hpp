#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gms {

inline constexpr int kAssetTypes = 9;
inline constexpr int kStations = 7;
/// Per (asset type, station) cell ceiling.
inline constexpr int kMaxPerCell = 5;
/// Side length of the padded square grid fed to the denoiser.
inline constexpr int kGridSize = 16;

inline constexpr int kCapacityStep = 30;
inline constexpr int kCapacityMax = 300;
inline constexpr int kCapacityClassCount = kCapacityMax / kCapacityStep + 1;

/// The last kHumanTypes asset types are human roles; the rest are machines.
inline constexpr int kHumanTypes = 3;
inline constexpr double kMachineRate = 30.0;

/// Counts of asset type i at station j, stored row-major (types x stations).
class Configuration {
public:
    Configuration() = default;
    Configuration(int types, int stations);
    Configuration(int types, int stations, std::vector<int> counts);

    static Configuration zeros(int types = kAssetTypes, int stations = kStations) {
        return Configuration(types, stations);
    }

    int types() const noexcept { return types_; }
    int stations() const noexcept { return stations_; }

    int& at(int type, int station) { return counts_[index(type, station)]; }
    int at(int type, int station) const { return counts_[index(type, station)]; }

    const std::vector<int>& counts() const noexcept { return counts_; }
    std::vector<int>& counts() noexcept { return counts_; }

    int type_total(int type) const;
    int total_assets() const;

    /// True when every cell lies in [0, c_max].
    bool within(int c_max) const;

    bool operator==(const Configuration&) const = default;

private:
    std::size_t index(int type, int station) const {
        return static_cast<std::size_t>(type) * stations_ + station;
    }

    int types_ = 0;
    int stations_ = 0;
    std::vector<int> counts_;
};

struct ConfigurationHash {
    std::size_t operator()(const Configuration& config) const noexcept;
};

enum class SkillLevel { kHigh, kModerate, kLow };

double skill_rate(SkillLevel level);
std::string_view to_string(SkillLevel level);
std::optional<SkillLevel> parse_skill_level(std::string_view text);

/// Processing rate (parts/hour per unit) of every asset type.
struct SkillProfile {
    std::vector<double> rates;
    int machine_types = 0;

    /// Machines at kMachineRate, human roles at the given skill level.
    static SkillProfile with_human_skill(SkillLevel level, int types = kAssetTypes);
    /// Human roles at moderate skill.
    static SkillProfile nominal(int types = kAssetTypes) {
        return with_human_skill(SkillLevel::kModerate, types);
    }
    static SkillProfile uniform(int types, double rate);

    int types() const noexcept { return static_cast<int>(rates.size()); }
    bool is_human(int type) const noexcept { return type >= machine_types; }
    void validate() const;
};

/// Throughput label: a multiple of kCapacityStep in [0, kCapacityMax].
class CapacityClass {
public:
    constexpr CapacityClass() = default;
    /// Throws InvalidInput unless value is one of 0, 30, ..., 300.
    explicit CapacityClass(int value);

    /// Clips to [0, 300] and floors to the class grid.
    static CapacityClass bin(double throughput);
    static CapacityClass from_index(int index);
    static std::vector<CapacityClass> all();

    constexpr int value() const noexcept { return value_; }
    constexpr int index() const noexcept { return value_ / kCapacityStep; }

    auto operator<=>(const CapacityClass&) const = default;

private:
    int value_ = 0;
};

/// Raw bottleneck rate: min over asset types of (type total x rate).
double bottleneck_throughput(const Configuration& config, const SkillProfile& skills);

/// Bottleneck throughput clipped to [0, 300] and floored to a multiple of 30.
int capacity(const Configuration& config, const SkillProfile& skills);

CapacityClass capacity_class(const Configuration& config, const SkillProfile& skills);

/// p x p grid holding the affine encoding of a configuration in its top-left block.
struct PaddedGrid {
    int size = 0;
    int types = 0;
    int stations = 0;
    std::vector<float> values;

    float& at(int row, int col) { return values[static_cast<std::size_t>(row) * size + col]; }
    float at(int row, int col) const { return values[static_cast<std::size_t>(row) * size + col]; }
    bool in_block(int row, int col) const { return row < types && col < stations; }
};

/// Affine map between integer counts in [0, c_max] and reals in [-1, 1].
class GridCodec {
public:
    explicit GridCodec(int types = kAssetTypes, int stations = kStations,
                       int c_max = kMaxPerCell, int size = kGridSize);

    int types() const noexcept { return types_; }
    int stations() const noexcept { return stations_; }
    int c_max() const noexcept { return c_max_; }
    int size() const noexcept { return size_; }

    float encode_count(int count) const {
        return static_cast<float>(2.0 * count / c_max_ - 1.0);
    }
    int decode_value(double value) const;

    PaddedGrid encode(const Configuration& config) const;
    Configuration decode(const PaddedGrid& grid) const;
    /// Decodes a raw size*size buffer.
    Configuration decode(const float* values) const;

    /// Overwrites cells outside the active block with the zero-count encoding.
    void clamp_padding(float* values) const;

private:
    int types_;
    int stations_;
    int c_max_;
    int size_;
};

void to_json(nlohmann::json& j, const Configuration& config);
void from_json(const nlohmann::json& j, Configuration& config);

}  // namespace gms
