#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gms/diffusion.hpp"

using namespace gms;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("gms_test_" + name)).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out << bytes;
}

/// Constant noise predictions that remember what they were asked.
class StubEstimator final : public NoiseEstimator {
public:
    explicit StubEstimator(float cond = 0.0f, float uncond = 0.0f) : cond_(cond), uncond_(uncond) {}

    TensorF estimate(const TensorF& z, int, std::span<const int> labels) override {
        ++calls;
        rows += static_cast<int>(labels.size());
        TensorF out(z.shape);
        const std::size_t plane = z.size() / labels.size();
        for (std::size_t k = 0; k < labels.size(); ++k) {
            std::fill_n(out.ptr() + k * plane, plane, labels[k] == 11 ? uncond_ : cond_);
        }
        return out;
    }
    int label(std::optional<CapacityClass> c) const override { return c ? c->index() : 11; }
    int grid() const override { return 16; }

    int calls = 0;
    int rows = 0;

private:
    float cond_, uncond_;
};

DaydreamDataset tiny_dataset(int runs = 2) {
    EvolutionParams p;
    p.generations = 5;
    p.population = 8;
    return build_dataset(runs, p, 21);
}

}  // namespace

TEST_CASE("schedule identities for T = 100 and T = 400") {
    for (int steps : {100, 400}) {
        const auto s = make_schedule(1e-4, 0.02, steps);
        REQUIRE(s.betas.size() == static_cast<std::size_t>(steps));
        CHECK(s.beta(1) == doctest::Approx(1e-4));
        CHECK(s.beta(steps) == doctest::Approx(0.02));
        for (int t = 1; t <= steps; ++t) {
            CHECK(std::abs(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t) - 1.0) < 1e-12);
            if (t > 1) {
                CHECK(s.alpha(t) < s.alpha(t - 1));
                CHECK(s.sigma(t) > s.sigma(t - 1));
            }
        }
    }
}

TEST_CASE("alpha_T equals the direct product of (1 - beta)") {
    const auto s = make_schedule(1e-4, 0.02, 400);
    long double prod = 1.0L;
    for (int t = 1; t <= 400; ++t) {
        const long double beta = 1e-4L + (0.02L - 1e-4L) * (t - 1) / 399.0L;
        prod *= 1.0L - beta;
    }
    CHECK(std::abs(s.alpha(400) - static_cast<double>(std::sqrt(prod))) < 1e-12);
}

TEST_CASE("schedule validation") {
    CHECK_THROWS_AS(make_schedule(0.0, 0.02, 100), InvalidInput);
    CHECK_THROWS_AS(make_schedule(0.03, 0.02, 100), InvalidInput);
    CHECK_THROWS_AS(make_schedule(1e-4, 1.0, 100), InvalidInput);
    CHECK_THROWS_AS(make_schedule(1e-4, 0.02, 0), InvalidInput);
    CHECK_NOTHROW(make_schedule(1e-4, 1e-4, 1));
}

TEST_CASE("forward diffusion statistics") {
    const auto s = make_schedule(1e-4, 0.02, 100);
    constexpr int n = 100000;
    Rng rng(1);
    std::normal_distribution<float> normal;
    TensorF x0({n}, 0.0f), eps({n});
    for (auto& v : eps.data) v = normal(rng);
    const auto z = forward_diffuse(x0, 100, eps, s);
    double m = 0.0, v = 0.0;
    for (float e : z.data) m += e;
    m /= n;
    for (float e : z.data) v += (e - m) * (e - m);
    v /= n - 1;
    const double target = s.sigma(100) * s.sigma(100);
    CHECK(std::abs(v - target) / target < 0.01);

    TensorF ones({3}, 1.0f), zero({3}, 0.0f);
    CHECK(forward_diffuse(ones, 50, zero, s)[0] == doctest::Approx(s.alpha(50)));
    CHECK_THROWS_AS(forward_diffuse(ones, 0, zero, s), InvalidInput);
    CHECK_THROWS_AS(forward_diffuse(ones, 101, zero, s), InvalidInput);
}

TEST_CASE("reverse step matches its analytic mean and variance") {
    const auto s = make_schedule(1e-4, 0.02, 100);
    constexpr int n = 100000;
    for (int t : {2, 37, 100}) {
        TensorF x({n}, 0.8f), eps({n}, -0.3f);
        Rng rng(static_cast<std::uint64_t>(t));
        const auto out = reverse_step(x, t, eps, s, rng);
        const double mean = (0.8 - s.beta(t) / s.sigma(t) * -0.3) / std::sqrt(1.0 - s.beta(t));
        double m = 0.0, v = 0.0;
        for (float e : out.data) m += e;
        m /= n;
        for (float e : out.data) v += (e - m) * (e - m);
        v /= n - 1;
        INFO("t = " << t);
        CHECK(std::abs(m - mean) < 4.0 * std::sqrt(s.beta(t) / n));
        CHECK(std::abs(m - mean) / std::abs(mean) < 0.02);
        CHECK(std::abs(v - s.beta(t)) / s.beta(t) < 0.02);
    }
    TensorF x({4}, 0.5f), eps({4}, 0.1f);
    Rng rng(0);
    const auto last = reverse_step(x, 1, eps, s, rng);
    const double expect = (0.5 - s.beta(1) / s.sigma(1) * 0.1) / std::sqrt(1.0 - s.beta(1));
    for (float v : last.data) CHECK(v == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("guidance mixes conditional and unconditional estimates") {
    TensorF c({2}, 1.0f), u({2}, 3.0f);
    CHECK(guide(c, u, 2.0)[0] == doctest::Approx(3 * 1.0 - 2 * 3.0));
    CHECK(guide(c, u, 0.0)[1] == doctest::Approx(1.0));

    TensorF z({4, 1, 16, 16});
    StubEstimator est(1.0f, 3.0f);
    const auto unguided = guided_noise(est, z, 5, CapacityClass(60), 0.0);
    CHECK(est.calls == 1);
    CHECK(est.rows == 4);
    CHECK(unguided[0] == 1.0f);
    const auto guided = guided_noise(est, z, 5, CapacityClass(60), 2.0);
    CHECK(est.calls == 2);
    CHECK(est.rows == 4 + 8);
    CHECK(guided[100] == doctest::Approx(-3.0));
}

TEST_CASE("sampling is reproducible and independent of batching") {
    const auto s = make_schedule(1e-4, 0.02, 20);
    const GridCodec codec;
    StubEstimator est;
    SampleRequest req;
    req.capacity = CapacityClass(120);
    req.count = 11;
    req.seed = 5;
    const auto a = sample(est, s, codec, req);
    const auto b = sample(est, s, codec, req);
    CHECK(a.configs == b.configs);
    req.count = 3;
    const auto c = sample(est, s, codec, req);
    for (int k = 0; k < 3; ++k) CHECK(c.configs[static_cast<std::size_t>(k)] == a.configs[static_cast<std::size_t>(k)]);
    req.seed = 6;
    CHECK(sample(est, s, codec, req).configs != c.configs);
}

TEST_CASE("snapshots: requested steps only, padding pinned, final frame is the decoded encoding") {
    const auto s = make_schedule(1e-4, 0.02, 20);
    const GridCodec codec;
    StubEstimator est;
    SampleRequest req;
    req.capacity = CapacityClass(240);
    req.count = 2;
    req.seed = 1;
    req.snapshot_steps = {20, 10, 0};
    const auto r = sample(est, s, codec, req);
    REQUIRE(r.snapshots.size() == 6);
    for (const auto& snap : r.snapshots) {
        for (int row = 0; row < 16; ++row)
            for (int col = 0; col < 16; ++col)
                if (row >= 9 || col >= 7) CHECK(snap.grid[static_cast<std::size_t>(row) * 16 + col] == -1.0f);
        if (snap.t == 0) {
            CHECK(snap.grid == codec.encode(r.configs[static_cast<std::size_t>(snap.sample)]).values);
        }
    }
    req.snapshot_steps = {21};
    CHECK_THROWS_AS(sample(est, s, codec, req), InvalidInput);
    const auto j = snapshots_json(r.snapshots);
    CHECK(j.size() == 6);
    CHECK(j[0]["grid"].size() == 16);
}

TEST_CASE("sampler input validation") {
    const auto s = make_schedule();
    const GridCodec codec;
    StubEstimator est;
    SampleRequest req;
    req.count = 0;
    CHECK_THROWS_AS(sample(est, s, codec, req), InvalidInput);
    req.count = 1;
    req.w = -1.0;
    CHECK_THROWS_AS(sample(est, s, codec, req), InvalidInput);

    DiffusionModel model{DenoiserModel(Architecture{}, 1), make_schedule(1e-4, 0.02, 10), GridCodec()};
    SampleRequest ok;
    CHECK_THROWS_AS(sample(model, make_schedule(1e-4, 0.02, 12), ok), InvalidInput);
    CHECK_THROWS_AS(sample(model, make_schedule(2e-4, 0.02, 10), ok), InvalidInput);
    CHECK_NOTHROW(sample(model, make_schedule(1e-4, 0.02, 10), ok));
}

TEST_CASE("training: loss curve, determinism and zero epochs") {
    const auto data = tiny_dataset();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.seed = 4;
    DiffusionModel a{DenoiserModel(Architecture{}, 4), make_schedule(1e-4, 0.02, 50), GridCodec()};
    DiffusionModel b = a;
    std::vector<int> seen;
    const auto ca = train(a, data.records, cfg, [&](int epoch, double) { seen.push_back(epoch); });
    const auto cb = train(b, data.records, cfg);
    CHECK(ca.epoch_loss.size() == 2);
    CHECK(seen == std::vector<int>{1, 2});
    CHECK(ca.epoch_loss == cb.epoch_loss);
    CHECK(a.denoiser.net().parameters()[5]->value.data == b.denoiser.net().parameters()[5]->value.data);

    const auto csv = temp_path("loss.csv");
    write_loss_csv(ca, csv);
    const auto text = slurp(csv);
    CHECK(text.rfind("epoch,mean_loss\n1,", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
    std::remove(csv.c_str());

    cfg.epochs = 0;
    CHECK(train(a, data.records, cfg).epoch_loss.empty());
    cfg.epochs = -1;
    CHECK_THROWS_AS(train(a, data.records, cfg), InvalidInput);
    cfg.epochs = 1;
    CHECK_THROWS_AS(train(a, std::span<const DaydreamRecord>(), cfg), InvalidInput);
}

TEST_CASE("an absurd learning rate diverges with the last finite loss reported") {
    const auto data = tiny_dataset(1);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg.lr = 1e30;
    DiffusionModel m{DenoiserModel(Architecture{}, 1), make_schedule(1e-4, 0.02, 20), GridCodec()};
    try {
        train(m, data.records, cfg);
        FAIL("training should have diverged");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("last finite") != std::string::npos);
    }
}

TEST_CASE("model checkpoints round-trip and corruption is reported by section") {
    const auto data = tiny_dataset(1);
    TrainConfig cfg;
    cfg.epochs = 1;
    DiffusionModel m{DenoiserModel(Architecture{}, 2), make_schedule(1e-4, 0.02, 10), GridCodec()};
    train(m, data.records, cfg);
    const auto path = temp_path("model.ckpt");
    save_model(m, path, {{"note", "unit"}});

    nlohmann::json meta;
    const auto back = load_model(path, &meta);
    CHECK(meta["note"] == "unit");
    CHECK(meta["schedule"]["T"] == 10);
    CHECK(back.schedule == m.schedule);
    SampleRequest req;
    req.count = 3;
    req.seed = 8;
    req.capacity = CapacityClass(180);
    CHECK(sample(back, req).configs == sample(m, req).configs);

    const std::string bytes = slurp(path);
    auto expect_section = [&](const std::string& corrupted, const std::string& section) {
        const auto bad = temp_path("bad.ckpt");
        spit(bad, corrupted);
        try {
            load_model(bad);
            FAIL("corrupted checkpoint loaded");
        } catch (const CheckpointError& e) {
            CHECK(e.section().find(section) != std::string::npos);
        }
        std::remove(bad.c_str());
    };
    std::string magic = bytes;
    magic[0] = 'X';
    expect_section(magic, "magic");
    std::string version = bytes;
    version[4] = 9;
    expect_section(version, "version");
    expect_section(bytes.substr(0, 10), "metadata");
    expect_section(bytes.substr(0, bytes.size() / 2), "tensor");
    expect_section(bytes + "xx", "trailer");
    CHECK_THROWS_AS(load_model(temp_path("missing.ckpt")), IoError);
    std::remove(path.c_str());
}
