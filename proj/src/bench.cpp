#include "gms/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>

#include "gms/daydream.hpp"
#include "gms/error.hpp"

namespace gms {

void SearchProblem::validate() const {
    if (!(timeout_s > 0.0)) throw InvalidInput("timeout must be positive");
    if (types < 1 || stations < 1 || c_max < 1) throw InvalidInput("search box must be non-empty");
    if (skills.types() != types) throw InvalidInput("skill profile does not cover every asset type");
}

namespace {

using Clock = std::chrono::steady_clock;

struct Stop {};

std::uint64_t name_stream(const char* name) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (; *name; ++name) h = (h ^ static_cast<unsigned char>(*name)) * 0x100000001B3ULL;
    return h;
}

// Shared objective bookkeeping: counts evaluations, watches the deadline and
// records the first exact hit.
class Objective {
public:
    Objective(const SearchProblem& problem, std::string name)
        : problem_(problem), start_(Clock::now()),
          deadline_(start_ + std::chrono::duration_cast<Clock::duration>(
                                 std::chrono::duration<double>(problem.timeout_s))) {
        result_.algorithm = std::move(name);
        result_.target = problem.target;
    }

    int dims() const { return problem_.types * problem_.stations; }
    int c_max() const { return problem_.c_max; }
    Configuration blank() const { return Configuration(problem_.types, problem_.stations); }

    double operator()(const Configuration& config) {
        if (Clock::now() >= deadline_) throw Stop{};
        ++result_.evaluations;
        const double gap = std::abs(capacity(config, problem_.skills) - problem_.target.value());
        if (gap == 0.0) {
            result_.found = config;
            result_.success = true;
            throw Stop{};
        }
        return gap;
    }

    double operator()(const std::vector<double>& position) { return (*this)(round(position)); }

    Configuration round(const std::vector<double>& position) const {
        Configuration c = blank();
        for (std::size_t k = 0; k < position.size(); ++k) {
            c.counts()[k] = std::clamp(static_cast<int>(std::lround(position[k])), 0, problem_.c_max);
        }
        return c;
    }

    BenchResult finish() {
        if (result_.success) {
            result_.elapsed_s = std::chrono::duration<double>(Clock::now() - start_).count();
            if (capacity_class(*result_.found, problem_.skills) != problem_.target) {
                throw Error("search reported a configuration outside the target class");
            }
        } else {
            result_.elapsed_s = problem_.timeout_s;
        }
        return std::move(result_);
    }

private:
    const SearchProblem& problem_;
    Clock::time_point start_;
    Clock::time_point deadline_;
    BenchResult result_;
};

template <typename Body>
BenchResult run(const SearchProblem& problem, const char* name, Body body) {
    problem.validate();
    Objective objective(problem, name);
    Rng rng(derive_seed(problem.seed, name_stream(name)));
    try {
        body(objective, rng);
    } catch (const Stop&) {
    }
    return objective.finish();
}

std::vector<double> random_position(int dims, int c_max, Rng& rng) {
    std::vector<double> x(static_cast<std::size_t>(dims));
    for (auto& v : x) v = uniform_real(rng, 0.0, c_max);
    return x;
}

}  // namespace

BenchResult solve_pso(const SearchProblem& problem, const PsoParams& params) {
    return run(problem, "pso", [&](Objective& f, Rng& rng) {
        const int d = f.dims();
        const double vmax = f.c_max();
        struct Particle {
            std::vector<double> x, v, best;
            double best_f;
        };
        std::vector<Particle> swarm;
        std::vector<double> gbest;
        double gbest_f = INFINITY;
        for (int k = 0; k < params.swarm; ++k) {
            Particle p;
            p.x = k == 0 ? std::vector<double>(static_cast<std::size_t>(d), 0.0) : random_position(d, f.c_max(), rng);
            p.v.resize(p.x.size());
            for (auto& v : p.v) v = uniform_real(rng, -vmax, vmax);
            p.best = p.x;
            p.best_f = f(p.x);
            if (p.best_f < gbest_f) {
                gbest_f = p.best_f;
                gbest = p.x;
            }
            swarm.push_back(std::move(p));
        }
        for (;;) {
            for (auto& p : swarm) {
                for (std::size_t k = 0; k < p.x.size(); ++k) {
                    p.v[k] = params.inertia * p.v[k] + params.cognitive * uniform_real(rng) * (p.best[k] - p.x[k]) +
                             params.social * uniform_real(rng) * (gbest[k] - p.x[k]);
                    p.v[k] = std::clamp(p.v[k], -vmax, vmax);
                    p.x[k] = std::clamp(p.x[k] + p.v[k], 0.0, static_cast<double>(f.c_max()));
                }
                const double value = f(p.x);
                if (value < p.best_f) {
                    p.best_f = value;
                    p.best = p.x;
                }
                if (value < gbest_f) {
                    gbest_f = value;
                    gbest = p.x;
                }
            }
        }
    });
}

BenchResult solve_ga(const SearchProblem& problem, const GaParams& params) {
    return run(problem, "ga", [&](Objective& f, Rng& rng) {
        struct Individual {
            Configuration config;
            double value;
        };
        std::vector<Individual> pop;
        for (int k = 0; k < params.population; ++k) {
            Configuration c = k == 0 ? f.blank() : random_config(rng, problem.types, problem.stations, problem.c_max);
            const double v = f(c);
            pop.push_back({std::move(c), v});
        }
        std::bernoulli_distribution do_cross(params.crossover_rate);
        auto pick = [&]() -> const Individual& {
            const Individual* best = nullptr;
            for (int k = 0; k < params.tournament_size; ++k) {
                const auto& c = pop[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pop.size()) - 1))];
                if (best == nullptr || c.value < best->value) best = &c;
            }
            return *best;
        };
        for (;;) {
            std::vector<Individual> next;
            next.push_back(*std::min_element(pop.begin(), pop.end(),
                                             [](const auto& a, const auto& b) { return a.value < b.value; }));
            while (next.size() < pop.size()) {
                const auto& a = pick();
                const auto& b = pick();
                auto [c1, c2] = do_cross(rng) ? column_crossover(a.config, b.config, rng) : std::pair{a.config, b.config};
                for (Configuration* child : {&c1, &c2}) {
                    if (next.size() == pop.size()) break;
                    mutate(*child, params.mutation_rate, problem.c_max, rng);
                    const double v = f(*child);
                    next.push_back({std::move(*child), v});
                }
            }
            pop = std::move(next);
        }
    });
}

BenchResult solve_de(const SearchProblem& problem, const DeParams& params) {
    return run(problem, "de", [&](Objective& f, Rng& rng) {
        if (params.population < 4) throw InvalidInput("differential evolution needs a population of at least 4");
        const int d = f.dims();
        std::vector<std::vector<double>> pop;
        std::vector<double> value;
        for (int k = 0; k < params.population; ++k) {
            pop.push_back(k == 0 ? std::vector<double>(static_cast<std::size_t>(d), 0.0)
                                 : random_position(d, f.c_max(), rng));
            value.push_back(f(pop.back()));
        }
        const int n = params.population;
        for (;;) {
            for (int i = 0; i < n; ++i) {
                int a, b, c;
                do a = uniform_int(rng, 0, n - 1); while (a == i);
                do b = uniform_int(rng, 0, n - 1); while (b == i || b == a);
                do c = uniform_int(rng, 0, n - 1); while (c == i || c == a || c == b);
                std::vector<double> trial = pop[static_cast<std::size_t>(i)];
                const int forced = uniform_int(rng, 0, d - 1);
                for (int k = 0; k < d; ++k) {
                    if (k == forced || uniform_real(rng) < params.cr) {
                        const auto kk = static_cast<std::size_t>(k);
                        trial[kk] = std::clamp(pop[static_cast<std::size_t>(a)][kk] +
                                                   params.f * (pop[static_cast<std::size_t>(b)][kk] -
                                                               pop[static_cast<std::size_t>(c)][kk]),
                                               0.0, static_cast<double>(f.c_max()));
                    }
                }
                const double v = f(trial);
                if (v <= value[static_cast<std::size_t>(i)]) {
                    pop[static_cast<std::size_t>(i)] = std::move(trial);
                    value[static_cast<std::size_t>(i)] = v;
                }
            }
        }
    });
}

BenchResult solve_sa(const SearchProblem& problem, const SaParams& params) {
    return run(problem, "sa", [&](Objective& f, Rng& rng) {
        Configuration current = f.blank();
        double current_f = f(current);
        double temperature = params.t0;
        for (;;) {
            Configuration candidate = current;
            int& cell = candidate.counts()[static_cast<std::size_t>(uniform_int(rng, 0, f.dims() - 1))];
            cell = std::clamp(cell + (uniform_int(rng, 0, 1) == 0 ? -1 : 1), 0, problem.c_max);
            const double v = f(candidate);
            if (v <= current_f || uniform_real(rng) < std::exp((current_f - v) / temperature)) {
                current = std::move(candidate);
                current_f = v;
            }
            temperature = std::max(temperature * params.cooling, 1e-12);
        }
    });
}

BenchResult solve_ica(const SearchProblem& problem, const IcaParams& params) {
    return run(problem, "ica", [&](Objective& f, Rng& rng) {
        if (params.imperialists < 1 || params.imperialists >= params.countries) {
            throw InvalidInput("ICA needs 1 <= imperialists < countries");
        }
        const int d = f.dims();
        struct Country {
            std::vector<double> x;
            double cost;
        };
        std::vector<Country> all;
        for (int k = 0; k < params.countries; ++k) {
            auto x = k == 0 ? std::vector<double>(static_cast<std::size_t>(d), 0.0) : random_position(d, f.c_max(), rng);
            const double c = f(x);
            all.push_back({std::move(x), c});
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.cost < b.cost; });
        struct Empire {
            Country imperialist;
            std::vector<Country> colonies;
        };
        std::vector<Empire> empires;
        for (int k = 0; k < params.imperialists; ++k) empires.push_back({all[static_cast<std::size_t>(k)], {}});
        for (std::size_t k = static_cast<std::size_t>(params.imperialists); k < all.size(); ++k) {
            empires[k % empires.size()].colonies.push_back(std::move(all[k]));
        }
        auto total_cost = [&](const Empire& e) {
            double mean = 0.0;
            for (const auto& c : e.colonies) mean += c.cost;
            if (!e.colonies.empty()) mean /= static_cast<double>(e.colonies.size());
            return e.imperialist.cost + params.colony_weight * mean;
        };
        for (;;) {
            for (auto& e : empires) {
                for (auto& col : e.colonies) {
                    for (int k = 0; k < d; ++k) {
                        const auto kk = static_cast<std::size_t>(k);
                        if (uniform_real(rng) < params.revolution_rate) {
                            col.x[kk] = uniform_real(rng, 0.0, f.c_max());
                        } else {
                            col.x[kk] += params.assimilation * uniform_real(rng) * (e.imperialist.x[kk] - col.x[kk]);
                            col.x[kk] = std::clamp(col.x[kk], 0.0, static_cast<double>(f.c_max()));
                        }
                    }
                    col.cost = f(col.x);
                    if (col.cost < e.imperialist.cost) std::swap(col, e.imperialist);
                }
            }
            if (empires.size() < 2) continue;
            // Competition: the weakest colony of the weakest empire moves to
            // an empire drawn in proportion to its power.
            std::vector<double> cost;
            for (const auto& e : empires) cost.push_back(total_cost(e));
            const auto weakest = static_cast<std::size_t>(std::max_element(cost.begin(), cost.end()) - cost.begin());
            const double worst = cost[weakest];
            std::vector<double> power;
            for (double c : cost) power.push_back(worst - c + 1e-9);
            power[weakest] = 0.0;
            std::discrete_distribution<std::size_t> choose(power.begin(), power.end());
            const std::size_t winner = choose(rng);
            Empire& loser = empires[weakest];
            if (loser.colonies.empty()) {
                empires[winner].colonies.push_back(std::move(loser.imperialist));
                empires.erase(empires.begin() + static_cast<std::ptrdiff_t>(weakest));
            } else {
                auto it = std::max_element(loser.colonies.begin(), loser.colonies.end(),
                                           [](const auto& a, const auto& b) { return a.cost < b.cost; });
                empires[winner].colonies.push_back(std::move(*it));
                loser.colonies.erase(it);
            }
        }
    });
}

BenchResult solve_diffusion(const SearchProblem& problem, const DiffusionModel& model, double w, int batch) {
    problem.validate();
    if (batch < 1) throw InvalidInput("batch must be >= 1");
    if (model.codec.types() != problem.types || model.codec.stations() != problem.stations ||
        model.codec.c_max() != problem.c_max) {
        throw InvalidInput("model codec does not match the search box");
    }
    const auto start = Clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };
    DenoiserModel local = model.denoiser;
    DenoiserEstimator estimator(local);
    BenchResult result;
    result.algorithm = "diffusion";
    result.target = problem.target;
    for (std::uint64_t round = 0; elapsed() < problem.timeout_s; ++round) {
        SampleRequest req;
        req.capacity = problem.target;
        req.w = w;
        req.count = batch;
        req.seed = derive_seed(problem.seed, round);
        for (auto& config : sample(estimator, model.schedule, model.codec, req).configs) {
            ++result.evaluations;
            if (capacity_class(config, problem.skills) == problem.target) {
                result.success = true;
                result.found = std::move(config);
                result.elapsed_s = elapsed();
                return result;
            }
        }
    }
    result.elapsed_s = problem.timeout_s;
    return result;
}

const BenchCell& BenchTable::cell(const std::string& algorithm, int target) const {
    for (const auto& c : cells) {
        if (c.algorithm == algorithm && c.target == target) return c;
    }
    throw InvalidInput("no bench cell for " + algorithm + " at " + std::to_string(target));
}

BenchTable run_bench(const BenchOptions& options) {
    if (options.repeats < 1) throw InvalidInput("repeats must be >= 1");
    if (options.targets.empty() || options.algorithms.empty()) throw InvalidInput("bench needs targets and algorithms");
    for (const auto& a : options.algorithms) {
        const auto& names = baseline_names();
        if (a == "diffusion") {
            if (options.model == nullptr) throw InvalidInput("diffusion benchmark needs a trained model");
        } else if (std::find(names.begin(), names.end(), a) == names.end()) {
            throw InvalidInput("unknown algorithm '" + a + "'");
        }
    }

    auto solve = [&](const std::string& algorithm, CapacityClass target, int repeat) {
        SearchProblem p;
        p.target = target;
        p.skills = options.skills;
        p.types = options.skills.types();
        if (options.model != nullptr) {
            p.types = options.model->codec.types();
            p.stations = options.model->codec.stations();
            p.c_max = options.model->codec.c_max();
        }
        p.timeout_s = options.timeout_s;
        p.seed = derive_seed(options.seed, static_cast<std::uint64_t>(target.value()) * 1000 + repeat);
        if (algorithm == "pso") return solve_pso(p);
        if (algorithm == "ga") return solve_ga(p);
        if (algorithm == "de") return solve_de(p);
        if (algorithm == "sa") return solve_sa(p);
        if (algorithm == "ica") return solve_ica(p);
        return solve_diffusion(p, *options.model, options.w);
    };

    BenchTable table;
    table.timeout_s = options.timeout_s;
    table.algorithms = options.algorithms;
    for (const auto& t : options.targets) table.targets.push_back(t.value());

    struct Job {
        std::size_t cell;
        std::string algorithm;
        CapacityClass target;
        int repeat;
    };
    std::vector<Job> jobs;
    for (const auto& a : options.algorithms) {
        for (const auto& t : options.targets) {
            BenchCell cell;
            cell.algorithm = a;
            cell.target = t.value();
            cell.repeats = options.repeats;
            table.cells.push_back(cell);
            for (int r = 0; r < options.repeats; ++r) jobs.push_back({table.cells.size() - 1, a, t, r});
        }
    }

    std::vector<BenchResult> results(jobs.size());
    if (options.jobs <= 1) {
        for (std::size_t k = 0; k < jobs.size(); ++k) results[k] = solve(jobs[k].algorithm, jobs[k].target, jobs[k].repeat);
    } else {
        std::vector<std::future<void>> pending;
        std::size_t next = 0;
        while (next < jobs.size() || !pending.empty()) {
            while (next < jobs.size() && pending.size() < static_cast<std::size_t>(options.jobs)) {
                const std::size_t k = next++;
                pending.push_back(std::async(std::launch::async, [&, k] {
                    results[k] = solve(jobs[k].algorithm, jobs[k].target, jobs[k].repeat);
                }));
            }
            pending.front().get();
            pending.erase(pending.begin());
        }
    }
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        BenchCell& cell = table.cells[jobs[k].cell];
        cell.successes += results[k].success ? 1 : 0;
        cell.mean_s += results[k].elapsed_s / cell.repeats;
        cell.runs.push_back(std::move(results[k]));
    }
    return table;
}

std::string bench_csv(const BenchTable& table) {
    std::ostringstream out;
    out << "algorithm";
    for (int t : table.targets) out << ',' << t;
    out << '\n';
    for (const auto& a : table.algorithms) {
        out << a;
        for (int t : table.targets) {
            const auto& c = table.cell(a, t);
            out << ',';
            if (c.successes == 0) {
                out << '>' << table.timeout_s;
            } else {
                out << c.mean_s;
            }
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace gms
