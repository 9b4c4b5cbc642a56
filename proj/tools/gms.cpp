// Command-line driver: daydream -> train -> sample / bench / eval / serve.

#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gms/bench.hpp"
#include "gms/daydream.hpp"
#include "gms/diffusion.hpp"
#include "gms/http.hpp"
#include "gms/metrics.hpp"
#include "gms/service.hpp"

#ifndef GMS_GIT_DESCRIBE
#define GMS_GIT_DESCRIBE "unknown"
#endif

namespace {

using nlohmann::json;

/// Bad flag values detected after CLI11 parsing; exits with 2 like parse errors.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Invocation {
    std::vector<std::string> argv;
    std::string started = utc_now();
};

Invocation g_invocation;

/// Written next to every artifact as <artifact>.manifest.json.
void write_manifest(const std::string& artifact, const std::string& command, const json& params,
                    std::uint64_t seed, const json& outputs) {
    json m = {
        {"command", command},
        {"argv", g_invocation.argv},
        {"parameters", params},
        {"seed", seed},
        {"git_describe", GMS_GIT_DESCRIBE},
        {"started", g_invocation.started},
        {"finished", utc_now()},
        {"outputs", outputs},
    };
    const std::string path = artifact + ".manifest.json";
    std::ofstream out(path);
    out << m.dump(2) << "\n";
    if (!out) throw gms::IoError("cannot write manifest", path);
}

gms::CapacityClass class_arg(int value) {
    try {
        return gms::CapacityClass(value);
    } catch (const gms::InvalidInput&) {
        throw UsageError("capacity " + std::to_string(value) + " is not a class (use a multiple of " +
                         std::to_string(gms::kCapacityStep) + " in [0, " + std::to_string(gms::kCapacityMax) + "])");
    }
}

std::vector<gms::CapacityClass> classes_arg(const std::vector<std::string>& items) {
    if (items.size() == 1 && items[0] == "all") return gms::CapacityClass::all();
    if (items.size() == 1 && items[0] == "default") return gms::EvalOptions::default_eval_classes();
    std::vector<gms::CapacityClass> out;
    for (const auto& s : items) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || s.empty()) throw UsageError("'" + s + "' is not a capacity class");
        out.push_back(class_arg(v));
    }
    return out;
}

json class_values(const std::vector<gms::CapacityClass>& classes) {
    json out = json::array();
    for (auto c : classes) out.push_back(c.value());
    return out;
}

// --- daydream -------------------------------------------------------------

struct DaydreamArgs {
    std::string out;
    int runs = 20;
    gms::EvolutionParams evo;
    std::uint64_t seed = 0;
    std::string skills = "random";
    bool fixed_demand = false;
    double balance = 0.0;
    int jobs = 1;
};

int run_daydream(const DaydreamArgs& a) {
    gms::DatasetOptions opts;
    if (a.skills == "random") {
        opts.skills = gms::SkillSampling::kRandom;
    } else if (a.skills == "nominal") {
        opts.skills = gms::SkillSampling::kNominal;
    } else {
        throw UsageError("--skills must be random or nominal");
    }
    opts.randomize_demand = !a.fixed_demand;
    opts.jobs = a.jobs;
    try {
        a.evo.validate();
    } catch (const gms::InvalidInput& e) {
        throw UsageError(e.what());
    }

    gms::DaydreamDataset data = gms::build_dataset(a.runs, a.evo, a.seed, opts);
    if (a.balance > 0.0) data = gms::balance_classes(data, a.balance, a.seed);
    gms::write_dataset(data, a.out);
    std::cout << data.records.size() << " records written to " << a.out << "\n";
    std::cout << gms::format_histogram(gms::class_histogram(data));

    json params = {{"out", a.out},       {"runs", a.runs},
                   {"generations", a.evo.generations}, {"pop", a.evo.population},
                   {"tournament", a.evo.tournament_size}, {"crossover", a.evo.crossover_rate},
                   {"mutation", a.evo.mutation_rate},  {"skills", a.skills},
                   {"fixed_demand", a.fixed_demand},   {"balance", a.balance},
                   {"jobs", a.jobs}};
    write_manifest(a.out, "daydream", params, a.seed, {{"dataset", a.out}, {"records", data.records.size()}});
    return 0;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    std::string loss_csv;
    int steps = 100;
    double beta0 = 1e-4;
    double betaT = 0.02;
    gms::TrainConfig cfg;
    bool quiet = false;
};

int run_train(TrainArgs a) {
    gms::NoiseSchedule schedule;
    try {
        schedule = gms::make_schedule(a.beta0, a.betaT, a.steps);
        a.cfg.validate();
    } catch (const gms::InvalidInput& e) {
        throw UsageError(e.what());
    }
    if (a.loss_csv.empty()) a.loss_csv = a.out + ".loss.csv";

    const gms::DaydreamDataset data = gms::read_dataset(a.data);
    const gms::DatasetHeader& h = data.header;
    gms::DiffusionModel model{gms::DenoiserModel(gms::nn::Architecture{}, a.cfg.seed), schedule,
                              gms::GridCodec(h.types, h.stations, h.c_max)};
    std::cout << "training on " << data.records.size() << " records, " << model.denoiser.parameter_count()
              << " parameters, T=" << a.steps << "\n";

    const auto t0 = std::chrono::steady_clock::now();
    auto report = [&](int epoch, double loss) {
        if (a.quiet) return;
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "epoch " << epoch << "/" << a.cfg.epochs << " loss " << loss << " (" << s << " s)"
                  << std::endl;
    };
    const gms::LossCurve curve = gms::train(model, data.records, a.cfg, report);

    json params = {{"data", a.data},         {"out", a.out},         {"loss_csv", a.loss_csv},
                   {"T", a.steps},           {"beta0", a.beta0},     {"betaT", a.betaT},
                   {"epochs", a.cfg.epochs}, {"pu", a.cfg.p_uncond}, {"batch", a.cfg.batch_size},
                   {"lr", a.cfg.lr}};
    gms::save_model(model, a.out, {{"train", params}, {"seed", a.cfg.seed}, {"records", data.records.size()}});
    gms::write_loss_csv(curve, a.loss_csv);
    std::cout << "checkpoint written to " << a.out << "\n";
    write_manifest(a.out, "train", params, a.cfg.seed, {{"checkpoint", a.out}, {"loss_csv", a.loss_csv}});
    return 0;
}

// --- sample ---------------------------------------------------------------

struct SampleArgs {
    std::string ckpt;
    int capacity = 240;
    int count = 5;
    double w = 2.0;
    std::uint64_t seed = 0;
    std::vector<int> snapshots;
    std::string out;
};

int run_sample(const SampleArgs& a) {
    gms::SampleRequest req;
    req.capacity = class_arg(a.capacity);
    req.count = a.count;
    req.w = a.w;
    req.seed = a.seed;
    req.snapshot_steps = a.snapshots;
    const gms::DiffusionModel model = gms::load_model(a.ckpt);
    try {
        req.validate(model.schedule.steps);
    } catch (const gms::InvalidInput& e) {
        throw UsageError(e.what());
    }
    const gms::SampleResult result = gms::sample(model, req);

    gms::ConditionClass target;
    target.capacity = a.capacity;
    json out = {{"capacity", a.capacity}, {"w", a.w}, {"seed", a.seed}, {"decisions", json::array()}};
    for (int k = 0; k < static_cast<int>(result.configs.size()); ++k) {
        out["decisions"].push_back(gms::decision_json(gms::assess(k, result.configs[k], target)));
    }
    if (!a.snapshots.empty()) out["snapshots"] = gms::snapshots_json(result.snapshots);

    if (a.out.empty()) {
        std::cout << out.dump(2) << "\n";
        return 0;
    }
    std::ofstream f(a.out);
    f << out.dump(2) << "\n";
    if (!f) throw gms::IoError("cannot write samples", a.out);
    json params = {{"ckpt", a.ckpt}, {"capacity", a.capacity}, {"count", a.count},
                   {"w", a.w},       {"snapshots", a.snapshots}, {"out", a.out}};
    write_manifest(a.out, "sample", params, a.seed, {{"samples", a.out}});
    std::cout << result.configs.size() << " samples written to " << a.out << "\n";
    return 0;
}

// --- bench ----------------------------------------------------------------

struct BenchArgs {
    std::string ckpt;
    std::vector<int> targets{0, 60, 120, 180, 240, 300};
    std::vector<std::string> algos{"pso", "ga", "de", "sa", "ica", "diffusion"};
    int repeats = 5;
    double timeout = 30.0;
    double w = 2.0;
    std::uint64_t seed = 0;
    std::string out = "bench.csv";
    int jobs = 1;
};

int run_bench(const BenchArgs& a) {
    gms::BenchOptions opts;
    for (int t : a.targets) opts.targets.push_back(class_arg(t));
    const auto& known = gms::baseline_names();
    bool diffusion = false;
    for (const auto& name : a.algos) {
        if (name == "diffusion") {
            diffusion = true;
        } else if (std::find(known.begin(), known.end(), name) == known.end()) {
            throw UsageError("unknown algorithm '" + name + "' (known: pso, ga, de, sa, ica, diffusion)");
        }
    }
    if (a.repeats < 1) throw UsageError("--repeats must be at least 1");
    if (!(a.timeout > 0.0)) throw UsageError("--timeout must be positive");
    if (diffusion && a.ckpt.empty()) throw UsageError("--ckpt is required when diffusion is benchmarked");

    std::unique_ptr<gms::DiffusionModel> model;
    if (diffusion) model = std::make_unique<gms::DiffusionModel>(gms::load_model(a.ckpt));
    opts.algorithms = a.algos;
    opts.repeats = a.repeats;
    opts.timeout_s = a.timeout;
    opts.seed = a.seed;
    opts.model = model.get();
    opts.w = a.w;
    opts.jobs = a.jobs;

    const gms::BenchTable table = gms::run_bench(opts);
    const std::string csv = gms::bench_csv(table);
    std::cout << csv;
    std::ofstream f(a.out);
    f << csv;
    if (!f) throw gms::IoError("cannot write bench table", a.out);
    json params = {{"ckpt", a.ckpt},        {"targets", a.targets}, {"algos", a.algos}, {"repeats", a.repeats},
                   {"timeout", a.timeout},  {"w", a.w},             {"out", a.out},     {"jobs", a.jobs}};
    write_manifest(a.out, "bench", params, a.seed, {{"table", a.out}});
    return 0;
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::vector<std::string> classes{"default"};
    int n = 100;
    double w = 2.0;
    bool unguided = false;
    std::uint64_t seed = 0;
    std::string out = "eval";
    int jobs = 1;
};

int run_eval(const EvalArgs& a) {
    gms::EvalOptions opts;
    opts.classes = classes_arg(a.classes);
    if (a.n < 1) throw UsageError("--n must be at least 1");
    if (a.w < 0.0) throw UsageError("--w must be non-negative");
    opts.samples_per_class = a.n;
    opts.seed = a.seed;
    opts.jobs = a.jobs;

    const gms::DiffusionModel model = gms::load_model(a.ckpt);
    const gms::DaydreamDataset data = gms::read_dataset(a.data);

    std::vector<gms::EvalReport> reports;
    opts.w = a.w;
    reports.push_back(gms::evaluate(model, data, opts));
    if (a.unguided) {
        opts.w = 0.0;
        reports.push_back(gms::evaluate(model, data, opts));
    }

    const std::string csv = gms::eval_csv(reports);
    json doc = json::array();
    for (const auto& r : reports) doc.push_back(gms::eval_json(r));
    std::cout << csv;
    const std::string csv_path = a.out + ".csv";
    const std::string json_path = a.out + ".json";
    std::ofstream(csv_path) << csv;
    std::ofstream(json_path) << doc.dump(2) << "\n";
    json params = {{"ckpt", a.ckpt}, {"data", a.data}, {"classes", class_values(opts.classes)},
                   {"n", a.n},       {"w", a.w},       {"unguided", a.unguided},
                   {"out", a.out},   {"jobs", a.jobs}};
    write_manifest(csv_path, "eval", params, a.seed, {{"csv", csv_path}, {"json", json_path}});
    return 0;
}

// --- serve ----------------------------------------------------------------

struct ServeArgs {
    std::string ckpt;
    gms::ServerOptions server;
    int oversample = 4;
    int default_capacity = -1;
    std::string inquiry = "grammar";
};

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

int run_serve(ServeArgs a) {
    gms::ServiceConfig cfg;
    cfg.oversample = a.oversample;
    if (a.oversample < 1) throw UsageError("--oversample must be at least 1");
    if (a.default_capacity >= 0) cfg.default_capacity = class_arg(a.default_capacity).value();
    if (a.inquiry == "remote") {
        cfg.backend = std::make_shared<gms::RemoteBackend>(gms::RemoteConfig::from_env(),
                                                           std::make_shared<gms::HttplibTransport>());
    } else if (a.inquiry != "grammar") {
        throw UsageError("--inquiry must be grammar or remote");
    }

    gms::Service service(cfg);
    if (!a.ckpt.empty()) service.load_model({{"path", a.ckpt}});
    gms::HttpServer server(service, a.server);
    const int port = server.bind();
    std::cout << "listening on http://" << a.server.host << ":" << port << std::endl;

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::thread watcher([&] {
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        server.stop();
    });
    server.run();
    g_stop = true;
    watcher.join();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    g_invocation.argv.assign(argv, argv + argc);

    CLI::App app{"Generative manufacturing configuration: dataset generation, training, sampling, benchmarks."};
    app.set_version_flag("--version", std::string(GMS_GIT_DESCRIBE));
    app.require_subcommand(1);

    DaydreamArgs dd;
    auto* c_dd = app.add_subcommand("daydream", "Generate a dataset with the genetic explorer");
    c_dd->add_option("--out", dd.out, "Output dataset (.jsonl or .jsonl.gz)")->required();
    c_dd->add_option("--runs", dd.runs, "Independent exploration runs")->check(CLI::PositiveNumber)->capture_default_str();
    c_dd->add_option("--generations", dd.evo.generations, "Generations per run")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c_dd->add_option("--pop", dd.evo.population, "Population per generation")
        ->check(CLI::Range(2, 100000))
        ->capture_default_str();
    c_dd->add_option("--mutation", dd.evo.mutation_rate, "Per-cell mutation rate")->capture_default_str();
    c_dd->add_option("--seed", dd.seed)->capture_default_str();
    c_dd->add_option("--skills", dd.skills, "Human skill per run: random or nominal")->capture_default_str();
    c_dd->add_flag("--fixed-demand", dd.fixed_demand, "Every run aims for the maximum capacity");
    c_dd->add_option("--balance", dd.balance, "Cap each class at this multiple of the median (0 = off)")
        ->capture_default_str();
    c_dd->add_option("--jobs", dd.jobs)->check(CLI::PositiveNumber)->capture_default_str();

    TrainArgs tr;
    auto* c_tr = app.add_subcommand(
        "train", "Train the conditional denoiser (long schedule: --T 400 --beta0 1e-4 --betaT 0.02)");
    c_tr->add_option("--data", tr.data)->required();
    c_tr->add_option("--out", tr.out, "Checkpoint path")->required();
    c_tr->add_option("--loss-csv", tr.loss_csv, "Defaults to <out>.loss.csv");
    c_tr->add_option("--T", tr.steps, "Diffusion steps")->capture_default_str();
    c_tr->add_option("--beta0", tr.beta0)->capture_default_str();
    c_tr->add_option("--betaT", tr.betaT)->capture_default_str();
    c_tr->add_option("--epochs", tr.cfg.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
    c_tr->add_option("--pu", tr.cfg.p_uncond, "Class dropout probability")->capture_default_str();
    c_tr->add_option("--batch", tr.cfg.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
    c_tr->add_option("--lr", tr.cfg.lr)->capture_default_str();
    c_tr->add_option("--seed", tr.cfg.seed)->capture_default_str();
    c_tr->add_flag("--quiet", tr.quiet);

    SampleArgs sa;
    auto* c_sa = app.add_subcommand("sample", "Sample configurations for a capacity class");
    c_sa->add_option("--ckpt", sa.ckpt)->required();
    c_sa->add_option("--capacity", sa.capacity)->capture_default_str();
    c_sa->add_option("--count", sa.count)->check(CLI::PositiveNumber)->capture_default_str();
    c_sa->add_option("--w", sa.w, "Guidance strength (0 = unguided)")->capture_default_str();
    c_sa->add_option("--seed", sa.seed)->capture_default_str();
    c_sa->add_option("--snapshots", sa.snapshots, "Steps to record, e.g. 100,50,0")->delimiter(',');
    c_sa->add_option("--out", sa.out, "Write JSON here instead of stdout");

    BenchArgs be;
    auto* c_be = app.add_subcommand("bench", "Time-to-target comparison against meta-heuristics");
    c_be->add_option("--ckpt", be.ckpt);
    c_be->add_option("--targets", be.targets)->delimiter(',')->capture_default_str();
    c_be->add_option("--algos", be.algos)->delimiter(',')->capture_default_str();
    c_be->add_option("--repeats", be.repeats)->check(CLI::PositiveNumber)->capture_default_str();
    c_be->add_option("--timeout", be.timeout, "Seconds per run")->capture_default_str();
    c_be->add_option("--w", be.w)->capture_default_str();
    c_be->add_option("--seed", be.seed)->capture_default_str();
    c_be->add_option("--out", be.out)->capture_default_str();
    c_be->add_option("--jobs", be.jobs)->capture_default_str();

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Accuracy, MSE, duplication and FID per class");
    c_ev->add_option("--ckpt", ev.ckpt)->required();
    c_ev->add_option("--data", ev.data, "Training dataset used as FID reference")->required();
    c_ev->add_option("--classes", ev.classes, "all, default (no 210) or a list like 0,120,240")
        ->delimiter(',')
        ->capture_default_str();
    c_ev->add_option("--n", ev.n, "Samples per class")->check(CLI::PositiveNumber)->capture_default_str();
    c_ev->add_option("--w", ev.w)->capture_default_str();
    c_ev->add_flag("--unguided", ev.unguided, "Add the w = 0 block");
    c_ev->add_option("--seed", ev.seed)->capture_default_str();
    c_ev->add_option("--out", ev.out, "Writes <out>.csv and <out>.json")->capture_default_str();
    c_ev->add_option("--jobs", ev.jobs)->capture_default_str();

    ServeArgs sv;
    auto* c_sv = app.add_subcommand("serve", "Run the JSON API and host the UI");
    c_sv->add_option("--ckpt", sv.ckpt, "Checkpoint loaded at start");
    c_sv->add_option("--host", sv.server.host)->capture_default_str();
    c_sv->add_option("--port", sv.server.port)->capture_default_str();
    c_sv->add_option("--ui-dir", sv.server.ui_dir, "Static UI build directory");
    c_sv->add_option("--cors-origin", sv.server.cors_origin)->capture_default_str();
    c_sv->add_option("--threads", sv.server.threads)->capture_default_str();
    c_sv->add_option("--oversample", sv.oversample)->capture_default_str();
    c_sv->add_option("--default-capacity", sv.default_capacity, "Used when an inquiry names no capacity");
    c_sv->add_option("--inquiry", sv.inquiry, "grammar or remote (GMS_INQUIRY_* environment)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (c_dd->parsed()) return run_daydream(dd);
        if (c_tr->parsed()) return run_train(tr);
        if (c_sa->parsed()) return run_sample(sa);
        if (c_be->parsed()) return run_bench(be);
        if (c_ev->parsed()) return run_eval(ev);
        if (c_sv->parsed()) return run_serve(sv);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const gms::DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
