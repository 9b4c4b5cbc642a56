#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gms/domain.hpp"
#include "gms/rng.hpp"

namespace gms {

/// A randomized future: worker skills, demanded throughput, and an RNG seed.
struct Scenario {
    int id = 0;
    SkillProfile skills = SkillProfile::nominal();
    std::uint64_t seed = 0;
    /// Target throughput the exploration aims for; 300 reduces fitness to
    /// capacity minus weighted asset count.
    int demand = kCapacityMax;
};

struct Objectives {
    double asset_weight = 1.0;
};

struct EvolutionParams {
    int generations = 25;
    int population = 40;
    int tournament_size = 3;
    double crossover_rate = 0.9;
    double mutation_rate = 0.05;

    void validate() const;
};

struct DaydreamRecord {
    Configuration config;
    CapacityClass capacity_class;
    int scenario_id = 0;
    int generation = 0;  // 1-based
};

enum class SkillSampling { kRandom, kNominal };

struct DatasetOptions {
    int types = kAssetTypes;
    int stations = kStations;
    int c_max = kMaxPerCell;
    SkillSampling skills = SkillSampling::kRandom;
    bool randomize_demand = true;
    Objectives objectives{};
    int jobs = 1;
};

struct DatasetHeader {
    int version = 1;
    int types = kAssetTypes;
    int stations = kStations;
    int c_max = kMaxPerCell;
    std::uint64_t seed = 0;
};

struct DaydreamDataset {
    DatasetHeader header;
    std::vector<DaydreamRecord> records;
    /// Scenarios in run order; not serialized.
    std::vector<Scenario> scenarios;
};

Configuration random_config(Rng& rng, int types = kAssetTypes, int stations = kStations,
                            int c_max = kMaxPerCell);

double fitness(const Configuration& config, const Scenario& scenario,
               const Objectives& objectives = {});

/// Children take stations [0, cut) from one parent and [cut, J) from the other.
std::pair<Configuration, Configuration> column_crossover(const Configuration& a, const Configuration& b,
                                                         Rng& rng);

/// Each cell moves by +-1 (clamped to [0, c_max]) with probability `rate`.
void mutate(Configuration& config, double rate, int c_max, Rng& rng);

/// Tournament selection, single-point column crossover, per-cell +-1 mutation.
/// Archives every individual of every generation (generations x population records).
std::vector<DaydreamRecord> evolve(const Scenario& scenario, const EvolutionParams& params,
                                   int types = kAssetTypes, int stations = kStations,
                                   int c_max = kMaxPerCell, const Objectives& objectives = {});

/// Draws the scenario for run `run` of a dataset seeded with `seed`.
Scenario make_scenario(int run, std::uint64_t seed, const DatasetOptions& options);

DaydreamDataset build_dataset(int runs, const EvolutionParams& params, std::uint64_t seed,
                              const DatasetOptions& options = {});

/// Record count per class value (all 11 classes present, possibly zero).
std::map<int, std::size_t> class_histogram(const DaydreamDataset& dataset);
std::string format_histogram(const std::map<int, std::size_t>& histogram);

/// Subsamples so no class holds more than `ratio` x the median count of the
/// non-empty classes. Keeps original record order.
DaydreamDataset balance_classes(const DaydreamDataset& dataset, double ratio,
                                std::uint64_t seed);

/// Newline-delimited JSON; `.gz` paths are gzip-compressed.
void write_dataset(const DaydreamDataset& dataset, const std::string& path);
DaydreamDataset read_dataset(const std::string& path);

std::string serialize_dataset(const DaydreamDataset& dataset);
DaydreamDataset parse_dataset(const std::string& text);

}  // namespace gms
