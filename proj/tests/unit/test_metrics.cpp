#include <doctest.h>

#include <cmath>

#include "gms/metrics.hpp"

using namespace gms;

namespace {

/// A configuration whose nominal capacity is exactly `parts` (a multiple of 30, <= 150).
Configuration with_capacity(int parts) {
    auto c = Configuration::zeros();
    for (int i = 0; i < kAssetTypes; ++i) c.at(i, 0) = parts / 30;
    return c;
}

}  // namespace

TEST_CASE("accuracy counts exact class matches") {
    const auto skills = SkillProfile::nominal();
    std::vector<Configuration> s(10, with_capacity(120));
    s[0] = s[1] = s[2] = with_capacity(60);
    CHECK(accuracy(s, CapacityClass(120), skills) == doctest::Approx(70.0));
    CHECK(accuracy(s, CapacityClass(300), skills) == 0.0);
    CHECK_THROWS_AS(accuracy(std::span<const Configuration>(), CapacityClass(0), skills), InvalidInput);
}

TEST_CASE("mse is in squared parts per hour") {
    const auto skills = SkillProfile::nominal();
    std::vector<Configuration> s(10, with_capacity(120));
    s[4] = with_capacity(90);
    CHECK(mse(s, 120, skills) == doctest::Approx(900.0 / 10));
}

TEST_CASE("duplication rate is per mille") {
    std::vector<DaydreamRecord> records(1);
    records[0].config = with_capacity(60);
    const DuplicateIndex index(records);
    std::vector<Configuration> s(1000, with_capacity(90));
    s[10] = s[500] = with_capacity(60);
    CHECK(duplication_rate(s, index) == doctest::Approx(2.0));
    CHECK(index.size() == 1);
}

TEST_CASE("Frechet distance of one-dimensional Gaussians has a closed form") {
    Eigen::MatrixXd a(4, 1), b(4, 1);
    a << 0, 1, 2, 3;
    b << 10, 12, 14, 16;
    // Means 1.5 and 13, sample variances 5/3 and 20/3.
    const double va = 5.0 / 3, vb = 20.0 / 3;
    const double expect = (13 - 1.5) * (13 - 1.5) + va + vb - 2 * std::sqrt(va * vb);
    CHECK(frechet_distance(a, b, 0.0) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("Frechet distance is zero on identical sets and symmetric") {
    Rng rng(3);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd a(200, 6), b(150, 6);
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < 6; ++c) a(r, c) = normal(rng);
    for (int r = 0; r < b.rows(); ++r)
        for (int c = 0; c < 6; ++c) b(r, c) = 0.5 * normal(rng) + c;
    CHECK(std::abs(frechet_distance(a, a)) < 1e-8);
    CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-8));
    CHECK(frechet_distance(a, b) > 0.0);
    CHECK_THROWS_AS(frechet_distance(a, Eigen::MatrixXd(3, 2)), InvalidInput);
}

TEST_CASE("fid ranks a shifted sample set further away than a resample") {
    Rng rng(9);
    std::vector<Configuration> ref, near, far;
    for (int k = 0; k < 300; ++k) ref.push_back(random_config(rng));
    for (int k = 0; k < 300; ++k) near.push_back(random_config(rng));
    for (int k = 0; k < 300; ++k) {
        auto c = random_config(rng);
        for (auto& v : c.counts()) v = std::min(kMaxPerCell, v + 2);
        far.push_back(c);
    }
    const double d_near = fid(near, ref), d_far = fid(far, ref);
    CHECK(d_near < d_far);
    CHECK(std::abs(fid(ref, ref)) < 1e-8);
}

TEST_CASE("default evaluation classes skip 210") {
    const auto cls = EvalOptions::default_eval_classes();
    CHECK(cls.size() == 10);
    for (const auto& c : cls) CHECK(c.value() != 210);
}

TEST_CASE("evaluation report formats") {
    EvalReport g;
    g.guided = true;
    g.w = 2;
    g.samples_per_class = 4;
    g.rows = {{0, 100, 0, 0, 1.5}, {60, 50, 450, 250, 2.5}};
    EvalReport u = g;
    u.guided = false;
    u.rows[1].accu_percent = 25;
    CHECK(g.mean_accuracy() == doctest::Approx(75));

    const std::vector<EvalReport> both{g, u};
    const auto csv = eval_csv(both);
    CHECK(csv.rfind("block,metric,0,60\n", 0) == 0);
    CHECK(csv.find("guided(w=2),accu_percent,100,50\n") != std::string::npos);
    CHECK(csv.find("unguided,accu_percent,100,25\n") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);

    const auto j = eval_json(g);
    CHECK(j["rows"].size() == 2);
    CHECK(j["rows"][1]["class"] == 60);
    CHECK(j["mean_accu_percent"] == doctest::Approx(75));
}

TEST_CASE("evaluate scores a small model end to end") {
    EvolutionParams p;
    p.generations = 3;
    p.population = 6;
    const auto data = build_dataset(2, p, 1);
    DiffusionModel model{DenoiserModel(Architecture{}, 1), make_schedule(1e-4, 0.02, 5), GridCodec()};
    EvalOptions opts;
    opts.classes = {CapacityClass(0), CapacityClass(300)};
    opts.samples_per_class = 3;
    const auto rep = evaluate(model, data, opts);
    REQUIRE(rep.rows.size() == 2);
    for (const auto& r : rep.rows) {
        CHECK(r.accu_percent >= 0.0);
        CHECK(r.accu_percent <= 100.0);
        CHECK(std::isfinite(r.fid));
    }
    opts.jobs = 2;
    const auto again = evaluate(model, data, opts);
    CHECK(again.rows[1].fid == doctest::Approx(rep.rows[1].fid));
}
