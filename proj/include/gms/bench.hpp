#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gms/diffusion.hpp"
#include "gms/domain.hpp"

namespace gms {

struct SearchProblem {
    CapacityClass target;
    SkillProfile skills = SkillProfile::nominal();
    int types = kAssetTypes;
    int stations = kStations;
    int c_max = kMaxPerCell;
    double timeout_s = 30.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BenchResult {
    std::string algorithm;
    CapacityClass target;
    double elapsed_s = 0.0;
    bool success = false;
    std::optional<Configuration> found;
    long evaluations = 0;
};

/// Baseline hyperparameters.
struct PsoParams {
    int swarm = 30;
    double inertia = 0.7;
    double cognitive = 1.5;
    double social = 1.5;
};
struct GaParams {
    int population = 40;
    int tournament_size = 3;
    double crossover_rate = 0.9;
    double mutation_rate = 0.05;
};
struct DeParams {
    int population = 40;
    double f = 0.5;
    double cr = 0.9;
};
struct SaParams {
    double t0 = 100.0;
    double cooling = 0.995;
};
struct IcaParams {
    int countries = 40;
    int imperialists = 4;
    double assimilation = 2.0;
    double revolution_rate = 0.1;
    double colony_weight = 0.1;
};

// Each baseline minimizes |capacity(x) - target| over the integer box and
// stops at the first exact class match. The all-zero layout is always the
// first candidate evaluated.
BenchResult solve_pso(const SearchProblem& problem, const PsoParams& params = {});
BenchResult solve_ga(const SearchProblem& problem, const GaParams& params = {});
BenchResult solve_de(const SearchProblem& problem, const DeParams& params = {});
BenchResult solve_sa(const SearchProblem& problem, const SaParams& params = {});
BenchResult solve_ica(const SearchProblem& problem, const IcaParams& params = {});

/// Samples batches of `batch` until one matches the target; evaluations count samples.
BenchResult solve_diffusion(const SearchProblem& problem, const DiffusionModel& model, double w = 2.0,
                            int batch = 8);

inline const std::vector<std::string>& baseline_names() {
    static const std::vector<std::string> names{"pso", "ga", "de", "sa", "ica"};
    return names;
}

struct BenchCell {
    std::string algorithm;
    int target = 0;
    int successes = 0;
    int repeats = 0;
    /// Mean elapsed over all repeats; a failed repeat counts as the timeout.
    double mean_s = 0.0;
    std::vector<BenchResult> runs;
};

struct BenchTable {
    std::vector<std::string> algorithms;
    std::vector<int> targets;
    std::vector<BenchCell> cells;  // algorithm-major
    double timeout_s = 30.0;

    const BenchCell& cell(const std::string& algorithm, int target) const;
};

struct BenchOptions {
    std::vector<CapacityClass> targets;
    std::vector<std::string> algorithms;
    int repeats = 5;
    double timeout_s = 30.0;
    std::uint64_t seed = 0;
    SkillProfile skills = SkillProfile::nominal();
    /// Needed only when "diffusion" is among the algorithms.
    const DiffusionModel* model = nullptr;
    double w = 2.0;
    int jobs = 1;
};

BenchTable run_bench(const BenchOptions& options);

/// Header = targets, one row per algorithm; a cell is the mean seconds, or
/// ">timeout" when every repeat failed.
std::string bench_csv(const BenchTable& table);

}  // namespace gms
