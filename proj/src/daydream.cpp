#include "gms/daydream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include <zlib.h>

#include "gms/error.hpp"

namespace gms {

void EvolutionParams::validate() const {
    if (generations < 1) throw InvalidInput("generations must be >= 1");
    if (population < 2) throw InvalidInput("population must be >= 2");
    if (tournament_size < 1) throw InvalidInput("tournament size must be >= 1");
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!rate_ok(crossover_rate) || !rate_ok(mutation_rate)) {
        throw InvalidInput("crossover and mutation rates must lie in [0, 1]");
    }
}

Configuration random_config(Rng& rng, int types, int stations, int c_max) {
    Configuration config(types, stations);
    for (int& c : config.counts()) c = uniform_int(rng, 0, c_max);
    return config;
}

double fitness(const Configuration& config, const Scenario& scenario,
               const Objectives& objectives) {
    double cap = capacity(config, scenario.skills);
    return scenario.demand - std::abs(cap - scenario.demand) -
           objectives.asset_weight * config.total_assets();
}

namespace {

struct Individual {
    Configuration config;
    double fitness = 0.0;
};

const Individual& tournament(const std::vector<Individual>& pop, int size, Rng& rng) {
    const Individual* best = nullptr;
    for (int k = 0; k < size; ++k) {
        const auto& candidate = pop[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pop.size()) - 1))];
        if (best == nullptr || candidate.fitness > best->fitness) best = &candidate;
    }
    return *best;
}

}  // namespace

std::pair<Configuration, Configuration> column_crossover(const Configuration& a,
                                                         const Configuration& b, Rng& rng) {
    Configuration left = a;
    Configuration right = b;
    if (a.stations() < 2) return {left, right};
    int cut = uniform_int(rng, 1, a.stations() - 1);
    for (int i = 0; i < a.types(); ++i) {
        for (int j = cut; j < a.stations(); ++j) {
            left.at(i, j) = b.at(i, j);
            right.at(i, j) = a.at(i, j);
        }
    }
    return {left, right};
}

void mutate(Configuration& config, double rate, int c_max, Rng& rng) {
    std::bernoulli_distribution flip(rate);
    for (int& c : config.counts()) {
        if (!flip(rng)) continue;
        int step = uniform_int(rng, 0, 1) == 0 ? -1 : 1;
        c = std::clamp(c + step, 0, c_max);
    }
}

std::vector<DaydreamRecord> evolve(const Scenario& scenario, const EvolutionParams& params,
                                   int types, int stations, int c_max,
                                   const Objectives& objectives) {
    params.validate();
    Rng rng(scenario.seed);
    std::vector<Individual> pop;
    pop.reserve(static_cast<std::size_t>(params.population));
    for (int k = 0; k < params.population; ++k) {
        Configuration c = random_config(rng, types, stations, c_max);
        double f = fitness(c, scenario, objectives);
        pop.push_back({std::move(c), f});
    }

    std::vector<DaydreamRecord> archive;
    archive.reserve(static_cast<std::size_t>(params.generations) * params.population);
    auto store = [&](int generation) {
        for (const auto& ind : pop) {
            archive.push_back({ind.config, capacity_class(ind.config, scenario.skills),
                               scenario.id, generation});
        }
    };
    store(1);

    std::bernoulli_distribution do_cross(params.crossover_rate);
    for (int gen = 2; gen <= params.generations; ++gen) {
        std::vector<Individual> next;
        next.reserve(pop.size());
        // Elitism: the best individual survives unchanged.
        next.push_back(*std::max_element(pop.begin(), pop.end(), [](const auto& a, const auto& b) {
            return a.fitness < b.fitness;
        }));
        while (next.size() < pop.size()) {
            const auto& p1 = tournament(pop, params.tournament_size, rng);
            const auto& p2 = tournament(pop, params.tournament_size, rng);
            auto [c1, c2] = do_cross(rng) ? column_crossover(p1.config, p2.config, rng)
                                          : std::pair{p1.config, p2.config};
            for (Configuration* child : {&c1, &c2}) {
                if (next.size() == pop.size()) break;
                mutate(*child, params.mutation_rate, c_max, rng);
                double f = fitness(*child, scenario, objectives);
                next.push_back({std::move(*child), f});
            }
        }
        pop = std::move(next);
        store(gen);
    }
    return archive;
}

Scenario make_scenario(int run, std::uint64_t seed, const DatasetOptions& options) {
    Scenario s;
    s.id = run;
    s.seed = derive_seed(seed, static_cast<std::uint64_t>(run));
    Rng rng(derive_seed(s.seed, 0xD5A7));
    s.skills = SkillProfile::nominal(options.types);
    if (options.skills == SkillSampling::kRandom) {
        constexpr SkillLevel levels[] = {SkillLevel::kHigh, SkillLevel::kModerate, SkillLevel::kLow};
        for (int i = s.skills.machine_types; i < options.types; ++i) {
            s.skills.rates[static_cast<std::size_t>(i)] = skill_rate(levels[uniform_int(rng, 0, 2)]);
        }
    }
    s.demand = options.randomize_demand
                   ? uniform_int(rng, 0, kCapacityClassCount - 1) * kCapacityStep
                   : kCapacityMax;
    return s;
}

DaydreamDataset build_dataset(int runs, const EvolutionParams& params, std::uint64_t seed,
                              const DatasetOptions& options) {
    if (runs < 1) throw InvalidInput("runs must be >= 1");
    params.validate();

    DaydreamDataset ds;
    ds.header = {1, options.types, options.stations, options.c_max, seed};
    for (int r = 0; r < runs; ++r) ds.scenarios.push_back(make_scenario(r, seed, options));

    std::vector<std::vector<DaydreamRecord>> per_run(static_cast<std::size_t>(runs));
    auto run_one = [&](int r) {
        per_run[static_cast<std::size_t>(r)] =
            evolve(ds.scenarios[static_cast<std::size_t>(r)], params, options.types,
                   options.stations, options.c_max, options.objectives);
    };
    int jobs = std::max(1, options.jobs);
    for (int start = 0; start < runs; start += jobs) {
        std::vector<std::future<void>> pending;
        for (int r = start; r < std::min(runs, start + jobs); ++r) {
            pending.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async,
                                         run_one, r));
        }
        for (auto& f : pending) f.get();
    }
    for (auto& run : per_run) {
        ds.records.insert(ds.records.end(), std::make_move_iterator(run.begin()),
                          std::make_move_iterator(run.end()));
    }
    return ds;
}

std::map<int, std::size_t> class_histogram(const DaydreamDataset& dataset) {
    std::map<int, std::size_t> hist;
    for (auto c : CapacityClass::all()) hist[c.value()] = 0;
    for (const auto& r : dataset.records) ++hist[r.capacity_class.value()];
    return hist;
}

std::string format_histogram(const std::map<int, std::size_t>& histogram) {
    std::size_t peak = 1;
    for (const auto& [cls, n] : histogram) peak = std::max(peak, n);
    std::ostringstream out;
    for (const auto& [cls, n] : histogram) {
        out.width(4);
        out << cls << " | " << std::string(n * 40 / peak, '#') << ' ' << n << '\n';
    }
    return out.str();
}

DaydreamDataset balance_classes(const DaydreamDataset& dataset, double ratio,
                                std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t k = 0; k < dataset.records.size(); ++k) {
        by_class[dataset.records[k].capacity_class.value()].push_back(k);
    }
    if (by_class.empty()) return dataset;
    std::vector<std::size_t> sizes;
    for (const auto& [cls, idx] : by_class) sizes.push_back(idx.size());
    std::sort(sizes.begin(), sizes.end());
    double median = sizes.size() % 2 == 1
                        ? static_cast<double>(sizes[sizes.size() / 2])
                        : 0.5 * static_cast<double>(sizes[sizes.size() / 2 - 1] + sizes[sizes.size() / 2]);
    auto cap = static_cast<std::size_t>(std::floor(ratio * median));

    std::vector<char> keep(dataset.records.size(), 1);
    Rng rng(derive_seed(seed, 0xBA1A));
    for (auto& [cls, idx] : by_class) {
        if (idx.size() <= cap) continue;
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = cap; k < idx.size(); ++k) keep[idx[k]] = 0;
    }
    DaydreamDataset out;
    out.header = dataset.header;
    out.scenarios = dataset.scenarios;
    for (std::size_t k = 0; k < dataset.records.size(); ++k) {
        if (keep[k]) out.records.push_back(dataset.records[k]);
    }
    return out;
}

std::string serialize_dataset(const DaydreamDataset& dataset) {
    std::string out;
    const auto& h = dataset.header;
    out += nlohmann::json{{"version", h.version}, {"I", h.types}, {"J", h.stations},
                          {"C_max", h.c_max}, {"seed", h.seed}}.dump();
    out += '\n';
    for (const auto& r : dataset.records) {
        out += nlohmann::json{{"config", r.config},
                              {"capacity_class", r.capacity_class.value()},
                              {"scenario_id", r.scenario_id},
                              {"generation", r.generation}}.dump();
        out += '\n';
    }
    return out;
}

DaydreamDataset parse_dataset(const std::string& text) {
    DaydreamDataset ds;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            if (!have_header) {
                ds.header.version = j.at("version").get<int>();
                ds.header.types = j.at("I").get<int>();
                ds.header.stations = j.at("J").get<int>();
                ds.header.c_max = j.at("C_max").get<int>();
                ds.header.seed = j.at("seed").get<std::uint64_t>();
                if (ds.header.version != 1) {
                    throw InvalidInput("unsupported dataset version " +
                                       std::to_string(ds.header.version));
                }
                have_header = true;
                continue;
            }
            DaydreamRecord r{j.at("config").get<Configuration>(),
                             CapacityClass(j.at("capacity_class").get<int>()),
                             j.at("scenario_id").get<int>(), j.at("generation").get<int>()};
            if (r.config.types() != ds.header.types || r.config.stations() != ds.header.stations ||
                !r.config.within(ds.header.c_max)) {
                throw InvalidInput("record does not match header dimensions or C_max");
            }
            ds.records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw InvalidInput("dataset line " + std::to_string(lineno) + ": " + e.what());
        } catch (const InvalidInput& e) {
            throw InvalidInput("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header) throw InvalidInput("dataset is missing its header line");
    return ds;
}

namespace {

bool is_gzip_path(const std::string& path) {
    return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

}  // namespace

void write_dataset(const DaydreamDataset& dataset, const std::string& path) {
    std::string text = serialize_dataset(dataset);
    if (is_gzip_path(path)) {
        // gzopen writes a zero mtime, so reruns stay byte-identical.
        gzFile f = gzopen(path.c_str(), "wb9");
        if (f == nullptr) throw IoError("cannot open dataset for writing", path);
        int written = gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
        int rc = gzclose(f);
        if (written != static_cast<int>(text.size()) || rc != Z_OK) {
            throw IoError("failed writing dataset", path);
        }
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open dataset for writing", path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing dataset", path);
}

DaydreamDataset read_dataset(const std::string& path) {
    std::string text;
    if (is_gzip_path(path)) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (f == nullptr) throw IoError("cannot open dataset", path);
        char buf[1 << 16];
        int n = 0;
        while ((n = gzread(f, buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(n));
        gzclose(f);
        if (n < 0) throw IoError("corrupt gzip stream", path);
    } else {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open dataset", path);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    return parse_dataset(text);
}

}  // namespace gms
