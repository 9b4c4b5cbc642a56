// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Tolerances are fixed below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gms/bench.hpp"
#include "gms/daydream.hpp"
#include "gms/diffusion.hpp"
#include "gms/inquiry.hpp"
#include "gms/metrics.hpp"
#include "gms/service.hpp"
#include "grad_suite.hpp"
#include "oracles.hpp"

using namespace gms;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and bounds.
constexpr double kScheduleTol = 1e-12;
constexpr double kScheduleSeconds = 1.0;
constexpr double kGradTol = 1e-3;
constexpr int kGradSamples = 50;
constexpr double kGradSeconds = 60.0;
constexpr int kMonteCarloDraws = 100000;
constexpr double kMonteCarloRel = 0.02;
constexpr double kMonteCarloSeconds = 30.0;
constexpr double kOracleSeconds = 10.0;
constexpr int kCodecRandomCases = 1000;
constexpr double kLossRatio = 0.5;
constexpr double kClassZeroAccuracy = 80.0;
constexpr double kMaxDuplicationPermille = 50.0;
constexpr double kTrainingMinutes = 30.0;
constexpr double kSpeedupFactor = 10.0;
constexpr double kPerSampleSeconds = 0.100;
constexpr int kSpeedRepeats = 5;
constexpr double kFidZeroTol = 1e-8;

// Desk-scale run: 8 runs x 25 generations x 40 individuals = 8000 records,
// 60 epochs (about 16 minutes on one core).
constexpr int kDeskRuns = 8;
constexpr int kDeskGenerations = 25;
constexpr int kDeskPopulation = 40;
constexpr int kDeskSteps = 100;
constexpr int kDeskEpochs = 60;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct DeskScale {
    DaydreamDataset data;
    DiffusionModel model;
    LossCurve curve;
    double train_minutes = 0.0;
    EvalReport guided, unguided;
    std::string checkpoint;
};

class Acceptance {
public:
    Acceptance(fs::path workdir, int eval_n) : workdir_(std::move(workdir)), eval_n_(eval_n) {
        fs::create_directories(workdir_);
    }

    void run(const std::string& name, const std::function<Outcome()>& body) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures_ += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << " | " << o.detail << " | " << fmt("%.1f s", seconds_since(t0))
                  << std::endl;
    }

    int failures() const { return failures_; }

    Outcome schedule_identities() {
        const auto t0 = Clock::now();
        double worst = 0.0;
        bool monotone = true;
        for (int steps : {100, 400}) {
            const auto s = make_schedule(1e-4, 0.02, steps);
            for (int t = 1; t <= steps; ++t) {
                worst = std::max(worst, std::abs(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t) - 1.0));
                if (t > 1) monotone &= s.alpha(t) < s.alpha(t - 1) && s.sigma(t) > s.sigma(t - 1);
            }
        }
        const double secs = seconds_since(t0);
        return {monotone && worst < kScheduleTol && secs < kScheduleSeconds,
                "monotone=" + std::to_string(monotone) + " max|a^2+s^2-1|=" + fmt("%.2e", worst) + " (< 1e-12)"};
    }

    Outcome gradients() {
        const auto t0 = Clock::now();
        double worst = 0.0;
        std::string worst_layer;
        bool enough = true;
        for (const auto& c : test::run_gradient_suite(kGradSamples, 77)) {
            enough &= c.report.checked >= kGradSamples;
            if (c.report.max_rel >= worst) {
                worst = c.report.max_rel;
                worst_layer = c.layer;
            }
        }
        const double secs = seconds_since(t0);
        return {enough && worst < kGradTol && secs < kGradSeconds,
                "max rel error " + fmt("%.2e", worst) + " in " + worst_layer + " (< 1e-3), " + fmt("%.1f s (< 60 s)", secs)};
    }

    Outcome monte_carlo() {
        const auto t0 = Clock::now();
        const auto s = make_schedule(1e-4, 0.02, kDeskSteps);
        double worst_mean = 0.0, worst_var = 0.0;
        for (int t : {2, 50, 100}) {
            TensorF x({kMonteCarloDraws}, 0.7f), eps({kMonteCarloDraws}, -0.4f);
            Rng rng(derive_seed(2024, static_cast<std::uint64_t>(t)));
            const auto out = reverse_step(x, t, eps, s, rng);
            const double mean = (0.7 - s.beta(t) / s.sigma(t) * -0.4) / std::sqrt(1.0 - s.beta(t));
            double m = 0.0, v = 0.0;
            for (float e : out.data) m += e;
            m /= kMonteCarloDraws;
            for (float e : out.data) v += (e - m) * (e - m);
            v /= kMonteCarloDraws - 1;
            worst_mean = std::max(worst_mean, std::abs(m - mean) / std::abs(mean));
            worst_var = std::max(worst_var, std::abs(v - s.beta(t)) / s.beta(t));
        }
        const double secs = seconds_since(t0);
        return {worst_mean < kMonteCarloRel && worst_var < kMonteCarloRel && secs < kMonteCarloSeconds,
                "mean rel " + fmt("%.2e", worst_mean) + ", variance rel " + fmt("%.2e", worst_var) + " (< 2%)"};
    }

    Outcome capacity_oracle() {
        const auto t0 = Clock::now();
        int checked = 0, mismatches = 0;
        for (double human : {120.0, 60.0, 0.0}) {
            SkillProfile skills;
            skills.rates = {kMachineRate, human};
            skills.machine_types = 1;
            for (const auto& c : test::all_configurations(2, 2, 2)) {
                test::ScheduleOracle oracle(c, skills.rates);
                mismatches += capacity(c, skills) != oracle.capacity();
                ++checked;
            }
        }
        const double secs = seconds_since(t0);
        return {checked == 3 * 81 && mismatches == 0 && secs < kOracleSeconds,
                std::to_string(checked) + " configurations (81 per human rate), " + std::to_string(mismatches) +
                    " mismatches"};
    }

    Outcome codec_and_archive() {
        int failures = 0;
        const GridCodec small(2, 2, 2, 4);
        const auto all = test::all_configurations(2, 2, 2);
        for (const auto& c : all) failures += small.decode(small.encode(c)) != c;
        const GridCodec codec;
        Rng rng(31);
        for (int k = 0; k < kCodecRandomCases; ++k) {
            const auto c = random_config(rng);
            failures += codec.decode(codec.encode(c)) != c;
        }

        EvolutionParams p;
        p.generations = 6;
        p.population = 10;
        const int runs = 3;
        const auto a = build_dataset(runs, p, 99);
        const auto b = build_dataset(runs, p, 99);
        const bool count_ok = a.records.size() == static_cast<std::size_t>(runs * p.generations * p.population);
        const auto pa = (workdir_ / "archive_a.jsonl.gz").string(), pb = (workdir_ / "archive_b.jsonl.gz").string();
        write_dataset(a, pa);
        write_dataset(b, pb);
        auto slurp = [](const std::string& path) {
            std::ifstream in(path, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(in), {});
        };
        const bool identical = serialize_dataset(a) == serialize_dataset(b) && slurp(pa) == slurp(pb);
        return {failures == 0 && count_ok && identical,
                std::to_string(all.size()) + " exhaustive + " + std::to_string(kCodecRandomCases) +
                    " random round trips, " + std::to_string(failures) + " failures; archive " +
                    std::to_string(a.records.size()) + " = 3x6x10; reruns identical=" + std::to_string(identical)};
    }

    DeskScale& desk() {
        if (desk_) return *desk_;
        desk_ = std::make_unique<DeskScale>();
        DeskScale& d = *desk_;
        const auto t0 = Clock::now();
        EvolutionParams p;
        p.generations = kDeskGenerations;
        p.population = kDeskPopulation;
        DatasetOptions opts;
        opts.skills = SkillSampling::kNominal;
        d.data = build_dataset(kDeskRuns, p, 2024, opts);
        write_dataset(d.data, (workdir_ / "desk.jsonl.gz").string());
        std::cout << "  desk dataset: " << d.data.records.size() << " records\n"
                  << format_histogram(class_histogram(d.data)) << std::flush;

        d.model = DiffusionModel{DenoiserModel(Architecture{}, 2024), make_schedule(1e-4, 0.02, kDeskSteps), GridCodec()};
        TrainConfig cfg;
        cfg.epochs = kDeskEpochs;
        cfg.seed = 2024;
        d.curve = train(d.model, d.data.records, cfg, [](int epoch, double loss) {
            std::cout << "  epoch " << epoch << " loss " << loss << std::endl;
        });
        d.train_minutes = seconds_since(t0) / 60.0;
        d.checkpoint = (workdir_ / "desk.ckpt").string();
        save_model(d.model, d.checkpoint, {{"dataset_records", d.data.records.size()}});
        write_loss_csv(d.curve, (workdir_ / "desk.loss.csv").string());

        EvalOptions eo;
        eo.samples_per_class = eval_n_;
        eo.seed = 7;
        eo.w = 2.0;
        d.guided = evaluate(d.model, d.data, eo);
        eo.w = 0.0;
        d.unguided = evaluate(d.model, d.data, eo);
        const std::vector<EvalReport> both{d.guided, d.unguided};
        std::ofstream(workdir_ / "desk_eval.csv") << eval_csv(both);
        std::cout << eval_csv(both) << std::flush;
        return d;
    }

    Outcome training_trend() {
        auto& d = desk();
        const double first = d.curve.epoch_loss.front(), last = d.curve.epoch_loss.back();
        const EvalRow* zero = nullptr;
        double worst_dr = 0.0;
        for (const auto& r : d.guided.rows) {
            if (r.capacity == 0) zero = &r;
            worst_dr = std::max(worst_dr, r.dr_permille);
        }
        const bool a = last < kLossRatio * first;
        const bool b = zero && zero->accu_percent >= kClassZeroAccuracy;
        const bool c = d.guided.mean_accuracy() > d.unguided.mean_accuracy();
        const bool dr = worst_dr <= kMaxDuplicationPermille;
        const bool size = d.data.records.size() >= 5000 && d.train_minutes <= kTrainingMinutes;
        std::ostringstream s;
        s << "records " << d.data.records.size() << ", loss " << fmt("%.4f", first) << " -> " << fmt("%.4f", last)
          << " (a " << (a ? "ok" : "no") << "), class-0 accu " << (zero ? zero->accu_percent : -1.0) << "% (b "
          << (b ? "ok" : "no") << "), mean accu guided " << fmt("%.1f", d.guided.mean_accuracy()) << "% vs unguided "
          << fmt("%.1f", d.unguided.mean_accuracy()) << "% (c " << (c ? "ok" : "no") << "), max DR "
          << fmt("%.1f", worst_dr) << " permille (d " << (dr ? "ok" : "no") << "), dataset+training "
          << fmt("%.1f", d.train_minutes) << " min";
        return {a && b && c && dr && size, s.str()};
    }

    Outcome responsiveness() {
        auto& d = desk();
        double ga_total = 0.0, diff_total = 0.0;
        int ga_hits = 0, diff_hits = 0;
        for (int r = 0; r < kSpeedRepeats; ++r) {
            SearchProblem p{CapacityClass(240)};
            p.seed = derive_seed(11, static_cast<std::uint64_t>(r));
            p.timeout_s = 30.0;
            const auto ga = solve_ga(p);
            const auto df = solve_diffusion(p, d.model, 2.0);
            ga_total += ga.elapsed_s;
            diff_total += df.elapsed_s;
            ga_hits += ga.success;
            diff_hits += df.success;
        }
        const double ga_mean = ga_total / kSpeedRepeats, diff_mean = diff_total / kSpeedRepeats;

        SampleRequest req;
        req.capacity = CapacityClass(240);
        req.count = 16;
        req.seed = 5;
        const auto t0 = Clock::now();
        sample(d.model, req);
        const double per_sample = seconds_since(t0) / req.count;

        const double ratio = ga_mean / diff_mean;
        std::ostringstream s;
        s << "target 240: GA mean " << fmt("%.2e", ga_mean) << " s (" << ga_hits << "/5 hits), diffusion mean "
          << fmt("%.2e", diff_mean) << " s (" << diff_hits << "/5 hits), GA/diffusion " << fmt("%.3g", ratio)
          << "x (need >= 10x); per sample " << fmt("%.1f", per_sample * 1e3) << " ms (need < 100 ms)";
        return {ratio >= kSpeedupFactor && per_sample < kPerSampleSeconds, s.str()};
    }

    Outcome fid_sanity() {
        auto& d = desk();
        Rng rng(3);
        std::vector<Configuration> all;
        for (const auto& r : d.data.records) all.push_back(r.config);
        std::shuffle(all.begin(), all.end(), rng);
        const std::size_t half = all.size() / 2;
        const std::vector<Configuration> a(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(half));
        const std::vector<Configuration> b(all.begin() + static_cast<std::ptrdiff_t>(half), all.end());
        std::vector<Configuration> uniform;
        for (std::size_t k = 0; k < half; ++k) uniform.push_back(random_config(rng));

        const double self = fid(a, a);
        const double ab = fid(a, b), ba = fid(b, a);
        const double vs_uniform = fid(a, uniform);
        const bool zero = std::abs(self) <= kFidZeroTol;
        const bool symmetric = std::abs(ab - ba) <= 1e-8 * std::max(1.0, std::abs(ab));
        const bool ordered = ab < vs_uniform;
        return {zero && symmetric && ordered,
                "fid(A,A)=" + fmt("%.1e", self) + ", fid(A,B)=" + fmt("%.4f", ab) + " fid(B,A)=" + fmt("%.4f", ba) +
                    ", fid(A,uniform)=" + fmt("%.4f", vs_uniform)};
    }

    Outcome parser() {
        std::ifstream in(std::string(GMS_TEST_DATA_DIR) + "/inquiry_fixtures.jsonl");
        int total = 0, exact = 0;
        bool has_reference = false;
        std::string first_miss;
        for (std::string line; std::getline(in, line);) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            const auto text = j.at("text").get<std::string>();
            const auto expect = j.at("expect").get<std::string>();
            ++total;
            std::string got;
            try {
                got = format_class(parse_inquiry(text));
            } catch (const ParseError& e) {
                got = std::string("error: ") + e.what();
            }
            if (got == expect) ++exact;
            else if (first_miss.empty()) first_miss = text + " -> " + got;
            has_reference |= text ==
                                 "I need a production line with a minimal capacity of 240 part/hour, using no more "
                                 "than 9 machines." &&
                             got == "(240, None, 9)";
        }

        // Remote path with a transport that always times out: the grammar takes over.
        struct DeadTransport final : HttpTransport {
            HttpResponse post(const std::string&, const std::string&, const std::string&, int) override {
                throw TransportError("timed out");
            }
        } dead;
        RemoteConfig cfg;
        cfg.endpoint = "http://127.0.0.1:9/v1/chat/completions";
        const auto r = remote_parse(dead, cfg, "240 parts per hour, at most 9 machines");
        const bool fallback = r.from_fallback && format_class(r.triple) == "(240, None, 9)";
        cfg.fallback = false;
        bool strict_throws = false;
        try {
            remote_parse(dead, cfg, "240 parts per hour");
        } catch (const RemoteBackendError&) {
            strict_throws = true;
        }
        std::string detail = std::to_string(exact) + "/" + std::to_string(total) + " exact, reference sentence " +
                             (has_reference ? "ok" : "missing") + ", stub fallback " + (fallback ? "ok" : "broken") +
                             ", strict mode " + (strict_throws ? "raises" : "silent");
        if (!first_miss.empty()) detail += "; first miss: " + first_miss;
        return {total >= 20 && exact == total && has_reference && fallback && strict_throws, detail};
    }

    Outcome service_contract() {
        auto& d = desk();
        Service s;
        std::vector<std::string> broken;
        auto expect = [&](bool ok, const std::string& what) {
            if (!ok) broken.push_back(what);
        };
        auto post = [&](const std::string& path, const nlohmann::json& body) {
            return s.handle("POST", path, body.dump());
        };

        auto load = post("/api/model/load", {{"path", d.checkpoint}});
        expect(load.status == 200 && load.body["schedule"]["T"] == kDeskSteps, "checkpoint load");

        auto first = post("/api/inquiry", {{"text", "I need a production line with a minimal capacity of 240 "
                                                    "part/hour, using no more than 9 machines."}});
        const auto sid = first.body.value("session_id", "");
        expect(first.body["triple"] == "(240, None, 9)", "first turn triple");
        // 240 parts/hour needs at least 8 of each machine type, so nine machines cannot work.
        auto tight = post("/api/sample", {{"session_id", sid}, {"count", 5}, {"seed", 17}});
        expect(tight.status == 200 && tight.body["decisions"].empty() &&
                   tight.body["note"]["code"] == "no_feasible_sample",
               "infeasible ceiling note");
        auto second = post("/api/inquiry", {{"text", "actually at most 150 machines"}, {"session_id", sid}});
        auto again = post("/api/inquiry", {{"text", "actually at most 150 machines"}, {"session_id", sid}});
        expect(second.body["triple"] == "(240, None, 150)" && again.body["triple"] == second.body["triple"],
               "merge idempotence");

        auto sampled = post("/api/sample", {{"session_id", sid}, {"count", 5}, {"seed", 17}});
        expect(sampled.status == 200, "sample status");
        const ConditionClass constraints{240, std::nullopt, 150};
        std::vector<Decision> got;
        for (const auto& j : sampled.body["decisions"]) {
            const auto re = assess(j["id"].get<int>(), j["config"].get<Configuration>(), constraints);
            expect(j["capacity"] == re.capacity && j["fitness"] == re.fitness &&
                       j["satisfies"]["capacity"] == re.meets_capacity && re.meets_max_machines && re.meets_skill,
                   "re-validation of decision " + std::to_string(re.id));
            got.push_back(re);
        }
        for (std::size_t k = 1; k < got.size(); ++k) expect(!decision_before(got[k], got[k - 1]), "ranking order");
        expect(post("/api/sample", {{"session_id", sid}, {"count", 5}, {"seed", 17}}).body == sampled.body,
               "fixed-seed determinism");

        const auto bad = (workdir_ / "desk_truncated.ckpt").string();
        {
            std::ifstream in(d.checkpoint, std::ios::binary);
            const std::string bytes(std::istreambuf_iterator<char>(in), {});
            std::ofstream(bad, std::ios::binary) << bytes.substr(0, bytes.size() * 2 / 3);
        }
        auto corrupt = post("/api/model/load", {{"path", bad}});
        expect(corrupt.status == 400 && corrupt.body["code"] == "bad_checkpoint" &&
                   corrupt.body["detail"]["section"].is_string(),
               "corruption reported");
        expect(s.health()["model"]["source"] == d.checkpoint, "model kept after failed load");

        std::ostringstream detail;
        detail << got.size() << " decisions re-validated";
        if (!broken.empty()) {
            detail << "; broken:";
            for (const auto& b : broken) detail << ' ' << b << ';';
        } else {
            detail << ", merge idempotent, ranking ordered, corruption -> 400 at section "
                   << corrupt.body["detail"]["section"].get<std::string>();
        }
        return {broken.empty() && !got.empty(), detail.str()};
    }

private:
    fs::path workdir_;
    int eval_n_;
    int failures_ = 0;
    std::unique_ptr<DeskScale> desk_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string workdir = (fs::temp_directory_path() / "gms_acceptance").string();
    int eval_n = 100;
    app.add_option("--workdir", workdir, "Scratch directory for datasets and checkpoints")->capture_default_str();
    app.add_option("--eval-n", eval_n, "Samples per class in the evaluation")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    Acceptance acc(workdir, eval_n);
    acc.run("schedule identities", [&] { return acc.schedule_identities(); });
    acc.run("gradient correctness", [&] { return acc.gradients(); });
    acc.run("sampler statistics", [&] { return acc.monte_carlo(); });
    acc.run("capacity oracle equivalence", [&] { return acc.capacity_oracle(); });
    acc.run("codec and archive invariants", [&] { return acc.codec_and_archive(); });
    acc.run("desk-scale training trend", [&] { return acc.training_trend(); });
    acc.run("responsiveness ordering", [&] { return acc.responsiveness(); });
    acc.run("fid sanity", [&] { return acc.fid_sanity(); });
    acc.run("parser fixture corpus", [&] { return acc.parser(); });
    acc.run("service contract", [&] { return acc.service_contract(); });
    std::cout << (acc.failures() == 0 ? "all criteria passed" : std::to_string(acc.failures()) + " criteria failed")
              << std::endl;
    return acc.failures() == 0 ? 0 : 1;
}
