#include <doctest.h>

#include "gms/bench.hpp"

using namespace gms;

namespace {

BenchResult run(const std::string& algo, const SearchProblem& p) {
    if (algo == "pso") return solve_pso(p);
    if (algo == "ga") return solve_ga(p);
    if (algo == "de") return solve_de(p);
    if (algo == "sa") return solve_sa(p);
    return solve_ica(p);
}

}  // namespace

TEST_CASE("every baseline reaches a mid-range target") {
    for (const auto& algo : baseline_names()) {
        SearchProblem p{CapacityClass(240)};
        p.seed = 3;
        p.timeout_s = 20.0;
        const auto r = run(algo, p);
        INFO(algo);
        REQUIRE(r.success);
        REQUIRE(r.found.has_value());
        CHECK(capacity_class(*r.found, p.skills) == p.target);
        CHECK(r.found->within(kMaxPerCell));
        CHECK(r.evaluations >= 1);
        CHECK(r.algorithm == algo);
    }
}

TEST_CASE("the zero class is found on the first evaluation") {
    for (const auto& algo : baseline_names()) {
        SearchProblem p{CapacityClass(0)};
        const auto r = run(algo, p);
        CHECK(r.success);
        CHECK(r.evaluations == 1);
        CHECK(r.found->total_assets() == 0);
    }
}

TEST_CASE("an unreachable target stops at the timeout") {
    SearchProblem p{CapacityClass(60)};
    p.skills = SkillProfile::with_human_skill(SkillLevel::kLow);
    p.timeout_s = 0.05;
    for (const auto& algo : baseline_names()) {
        const auto r = run(algo, p);
        INFO(algo);
        CHECK_FALSE(r.success);
        CHECK(r.elapsed_s == p.timeout_s);
    }
    p.timeout_s = 0.0;
    CHECK_THROWS_AS(solve_ga(p), InvalidInput);
}

TEST_CASE("bench table and csv") {
    BenchOptions o;
    o.targets = {CapacityClass(0), CapacityClass(60)};
    o.algorithms = {"ga", "sa"};
    o.repeats = 2;
    o.timeout_s = 0.05;
    o.skills = SkillProfile::with_human_skill(SkillLevel::kLow);
    const auto table = run_bench(o);
    CHECK(table.cells.size() == 4);
    const auto& miss = table.cell("ga", 60);
    CHECK(miss.successes == 0);
    CHECK(miss.mean_s == doctest::Approx(0.05));
    CHECK(table.cell("sa", 0).successes == 2);
    const auto csv = bench_csv(table);
    CHECK(csv.rfind("algorithm,0,60\n", 0) == 0);
    CHECK(csv.find(",>0.05\n") != std::string::npos);

    BenchOptions bad = o;
    bad.algorithms = {"diffusion"};
    CHECK_THROWS_AS(run_bench(bad), InvalidInput);
    bad.algorithms = {"hill-climb"};
    CHECK_THROWS_AS(run_bench(bad), InvalidInput);
}

TEST_CASE("diffusion search uses batches of samples") {
    DiffusionModel model{DenoiserModel(Architecture{}, 1), make_schedule(1e-4, 0.02, 4), GridCodec()};
    SearchProblem p{CapacityClass(0)};
    p.timeout_s = 30.0;
    // Evaluations count individual samples up to the first hit.
    const auto r = solve_diffusion(p, model, 2.0, 4);
    CHECK(r.algorithm == "diffusion");
    if (r.success) CHECK(r.evaluations >= 1);
}
