#include "gms/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gms/error.hpp"

namespace gms {

NoiseSchedule make_schedule(double beta0, double betaT, int steps) {
    if (!(beta0 > 0.0) || !(beta0 <= betaT) || !(betaT < 1.0)) {
        throw InvalidInput("schedule needs 0 < beta0 <= betaT < 1");
    }
    if (steps < 1) throw InvalidInput("schedule needs at least one step");
    NoiseSchedule s;
    s.steps = steps;
    s.beta0 = beta0;
    s.betaT = betaT;
    double prod = 1.0;
    for (int t = 1; t <= steps; ++t) {
        const double b = steps == 1 ? beta0 : beta0 + (betaT - beta0) * (t - 1) / (steps - 1);
        prod *= 1.0 - b;
        s.betas.push_back(b);
        s.alphas.push_back(std::sqrt(prod));
        s.sigmas.push_back(std::sqrt(1.0 - prod));
    }
    return s;
}

namespace {

void check_step(int t, const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.steps) {
        throw InvalidInput("step " + std::to_string(t) + " outside [1, " + std::to_string(schedule.steps) + "]");
    }
}

std::vector<float> active_mask(const GridCodec& codec) {
    const int g = codec.size();
    std::vector<float> mask(static_cast<std::size_t>(g) * g, 0.0f);
    for (int i = 0; i < codec.types(); ++i) {
        for (int j = 0; j < codec.stations(); ++j) mask[static_cast<std::size_t>(i) * g + j] = 1.0f;
    }
    return mask;
}

void fill_normal(float* out, std::size_t n, Rng& rng) {
    std::normal_distribution<float> normal(0.0f, 1.0f);
    for (std::size_t k = 0; k < n; ++k) out[k] = normal(rng);
}

void reverse_step_into(const float* x, const float* eps, float* out, std::size_t n, int t,
                       const NoiseSchedule& schedule, Rng& rng) {
    const double beta = schedule.beta(t);
    const double scale = 1.0 / std::sqrt(1.0 - beta);
    const double coef = beta / schedule.sigma(t);
    const double noise = std::sqrt(beta);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        double v = scale * (x[k] - coef * eps[k]);
        if (t > 1) v += noise * normal(rng);
        out[k] = static_cast<float>(v);
    }
}

}  // namespace

TensorF forward_diffuse(const TensorF& x0, int t, const TensorF& eps, const NoiseSchedule& schedule) {
    check_step(t, schedule);
    if (x0.size() != eps.size()) throw InvalidInput("x0 and noise differ in size");
    TensorF z(x0.shape);
    const double a = schedule.alpha(t), s = schedule.sigma(t);
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = static_cast<float>(a * x0[k] + s * eps[k]);
    return z;
}

void TrainConfig::validate() const {
    if (!(p_uncond >= 0.0 && p_uncond <= 1.0)) throw InvalidInput("p_uncond must lie in [0, 1]");
    if (epochs < 0) throw InvalidInput("epochs must be >= 0");
    if (batch_size < 1) throw InvalidInput("batch size must be positive");
    if (!(lr > 0.0)) throw InvalidInput("learning rate must be positive");
}

LossCurve train(DiffusionModel& model, std::span<const DaydreamRecord> records, const TrainConfig& cfg,
                const EpochCallback& on_epoch) {
    cfg.validate();
    if (records.empty()) throw InvalidInput("training set is empty");
    const GridCodec& codec = model.codec;
    const NoiseSchedule& schedule = model.schedule;
    const int g = codec.size();
    if (model.denoiser.architecture().grid != g) {
        throw InvalidInput("denoiser grid " + std::to_string(model.denoiser.architecture().grid) +
                           " does not match codec grid " + std::to_string(g));
    }
    const std::size_t plane = static_cast<std::size_t>(g) * g;

    std::vector<float> grids(records.size() * plane);
    std::vector<int> labels(records.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
        PaddedGrid pg = codec.encode(records[r].config);
        std::copy(pg.values.begin(), pg.values.end(), grids.begin() + static_cast<std::ptrdiff_t>(r * plane));
        labels[r] = model.denoiser.label(records[r].capacity_class);
    }
    const std::vector<float> mask = active_mask(codec);
    const int null_label = model.denoiser.null_label();

    Rng rng(cfg.seed);
    AdamState<float> adam;
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::bernoulli_distribution drop(cfg.p_uncond);

    LossCurve curve;
    double last_finite = std::nan("");
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const int n = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - start));
            TensorF z({n, 1, g, g});
            TensorF eps({n, 1, g, g});
            std::vector<int> steps(static_cast<std::size_t>(n));
            std::vector<int> cls(static_cast<std::size_t>(n));
            fill_normal(eps.ptr(), eps.size(), rng);
            for (int k = 0; k < n; ++k) {
                const std::size_t r = order[start + static_cast<std::size_t>(k)];
                const int t = uniform_int(rng, 1, schedule.steps);
                steps[static_cast<std::size_t>(k)] = t;
                cls[static_cast<std::size_t>(k)] = drop(rng) ? null_label : labels[r];
                const double a = schedule.alpha(t), s = schedule.sigma(t);
                const float* x0 = grids.data() + r * plane;
                float* zk = z.ptr() + static_cast<std::size_t>(k) * plane;
                const float* ek = eps.ptr() + static_cast<std::size_t>(k) * plane;
                for (std::size_t c = 0; c < plane; ++c) zk[c] = static_cast<float>(a * x0[c] + s * ek[c]);
                codec.clamp_padding(zk);
            }
            TensorF pred = model.denoiser.forward_estimate(z, steps, cls, Mode::kTrain);
            LossAndSeed ls = masked_squared_error(pred, eps, mask);
            if (!std::isfinite(ls.loss)) {
                throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch) +
                                          " (last finite batch loss " + std::to_string(last_finite) + ")",
                                      "loss");
            }
            last_finite = ls.loss;
            GradientTape tape = model.denoiser.backward(ls.seed);
            try {
                apply_update(model.denoiser, tape, adam, cfg.lr);
            } catch (const DivergenceError& e) {
                throw DivergenceError(std::string(e.what()) + " in epoch " + std::to_string(epoch) +
                                          " (last finite batch loss " + std::to_string(last_finite) + ")",
                                      e.parameter());
            }
            total += ls.loss * n;
        }
        const double mean = total / static_cast<double>(order.size());
        curve.epoch_loss.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    return curve;
}

void write_loss_csv(const LossCurve& curve, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open loss curve for writing", path);
    out << "epoch,mean_loss\n";
    out.precision(9);
    for (std::size_t k = 0; k < curve.epoch_loss.size(); ++k) out << k + 1 << ',' << curve.epoch_loss[k] << '\n';
    if (!out) throw IoError("failed writing loss curve", path);
}

TensorF DenoiserEstimator::estimate(const TensorF& z, int t, std::span<const int> labels) {
    std::vector<int> steps(labels.size(), t);
    return model_.forward_estimate(z, steps, labels, Mode::kInference);
}

TensorF guide(const TensorF& cond, const TensorF& uncond, double w) {
    if (cond.shape != uncond.shape) throw InvalidInput("conditional and unconditional estimates differ in shape");
    TensorF out(cond.shape);
    const float a = static_cast<float>(1.0 + w), b = static_cast<float>(w);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * cond[k] - b * uncond[k];
    return out;
}

TensorF guided_noise(NoiseEstimator& estimator, const TensorF& z, int t, CapacityClass c, double w) {
    if (!(w >= 0.0)) throw InvalidInput("guidance strength must be >= 0");
    const int g = estimator.grid();
    const std::size_t plane = static_cast<std::size_t>(g) * g;
    if (z.size() == 0 || z.size() % plane != 0) throw InvalidInput("latent batch does not tile the grid");
    const int n = static_cast<int>(z.size() / plane);
    const int cond = estimator.label(c);
    if (w == 0.0) {
        std::vector<int> labels(static_cast<std::size_t>(n), cond);
        return estimator.estimate(z, t, labels);
    }
    // One forward over [conditional rows; unconditional rows].
    TensorF both({2 * n, 1, g, g});
    std::copy(z.data.begin(), z.data.end(), both.data.begin());
    std::copy(z.data.begin(), z.data.end(), both.data.begin() + static_cast<std::ptrdiff_t>(z.size()));
    std::vector<int> labels(static_cast<std::size_t>(2 * n), estimator.label(std::nullopt));
    std::fill_n(labels.begin(), n, cond);
    TensorF est = estimator.estimate(both, t, labels);
    TensorF ec(z.shape), eu(z.shape);
    std::copy_n(est.data.begin(), z.size(), ec.data.begin());
    std::copy_n(est.data.begin() + static_cast<std::ptrdiff_t>(z.size()), z.size(), eu.data.begin());
    return guide(ec, eu, w);
}

TensorF reverse_step(const TensorF& x, int t, const TensorF& eps_tilde, const NoiseSchedule& schedule, Rng& rng) {
    check_step(t, schedule);
    if (x.size() != eps_tilde.size()) throw InvalidInput("latent and noise estimate differ in size");
    TensorF out(x.shape);
    reverse_step_into(x.ptr(), eps_tilde.ptr(), out.ptr(), x.size(), t, schedule, rng);
    return out;
}

void SampleRequest::validate(int steps) const {
    if (!(w >= 0.0)) throw InvalidInput("guidance strength must be >= 0");
    if (count < 1) throw InvalidInput("sample count must be >= 1");
    for (int t : snapshot_steps) {
        if (t < 0 || t > steps) {
            throw InvalidInput("snapshot step " + std::to_string(t) + " outside [0, " + std::to_string(steps) + "]");
        }
    }
}

SampleResult sample(NoiseEstimator& estimator, const NoiseSchedule& schedule, const GridCodec& codec,
                    const SampleRequest& req) {
    req.validate(schedule.steps);
    const int g = codec.size();
    if (estimator.grid() != g) throw InvalidInput("estimator grid does not match codec grid");
    const std::size_t plane = static_cast<std::size_t>(g) * g;
    auto wants = [&](int t) {
        return std::find(req.snapshot_steps.begin(), req.snapshot_steps.end(), t) != req.snapshot_steps.end();
    };

    // Eight samples per pass keeps the guided batch at 16 grids, where the
    // network runs fastest per grid.
    constexpr int kChunk = 8;
    SampleResult result;
    result.configs.reserve(static_cast<std::size_t>(req.count));
    for (int first = 0; first < req.count; first += kChunk) {
        const int n = std::min(kChunk, req.count - first);
        std::vector<Rng> rngs;
        TensorF x({n, 1, g, g});
        for (int k = 0; k < n; ++k) {
            rngs.emplace_back(derive_seed(req.seed, static_cast<std::uint64_t>(first + k)));
            float* xk = x.ptr() + static_cast<std::size_t>(k) * plane;
            fill_normal(xk, plane, rngs.back());
            codec.clamp_padding(xk);
        }
        auto record = [&](int t, const TensorF& state) {
            if (!wants(t)) return;
            for (int k = 0; k < n; ++k) {
                const float* xk = state.ptr() + static_cast<std::size_t>(k) * plane;
                result.snapshots.push_back({first + k, t, std::vector<float>(xk, xk + plane)});
            }
        };
        record(schedule.steps, x);
        for (int t = schedule.steps; t >= 1; --t) {
            TensorF eps = guided_noise(estimator, x, t, req.capacity, req.w);
            TensorF next(x.shape);
            for (int k = 0; k < n; ++k) {
                const std::size_t off = static_cast<std::size_t>(k) * plane;
                reverse_step_into(x.ptr() + off, eps.ptr() + off, next.ptr() + off, plane, t, schedule,
                                  rngs[static_cast<std::size_t>(k)]);
                codec.clamp_padding(next.ptr() + off);
            }
            x = std::move(next);
            if (t - 1 >= 1) record(t - 1, x);
        }
        TensorF decoded(x.shape);
        for (int k = 0; k < n; ++k) {
            Configuration config = codec.decode(x.ptr() + static_cast<std::size_t>(k) * plane);
            if (!config.within(codec.c_max())) throw Error("decoded configuration violates cell bounds");
            PaddedGrid pg = codec.encode(config);
            std::copy(pg.values.begin(), pg.values.end(), decoded.ptr() + static_cast<std::size_t>(k) * plane);
            result.configs.push_back(std::move(config));
        }
        record(0, decoded);
    }
    std::stable_sort(result.snapshots.begin(), result.snapshots.end(), [](const Snapshot& a, const Snapshot& b) {
        return a.sample < b.sample;
    });
    return result;
}

SampleResult sample(const DiffusionModel& model, const SampleRequest& req) {
    DenoiserModel local = model.denoiser;
    DenoiserEstimator est(local);
    return sample(est, model.schedule, model.codec, req);
}

SampleResult sample(const DiffusionModel& model, const NoiseSchedule& schedule, const SampleRequest& req) {
    if (schedule.steps != model.schedule.steps) {
        throw InvalidInput("schedule has " + std::to_string(schedule.steps) + " steps, model was trained with " +
                           std::to_string(model.schedule.steps));
    }
    if (schedule != model.schedule) throw InvalidInput("schedule differs from the one the model was trained with");
    return sample(model, req);
}

nlohmann::json snapshots_json(const std::vector<Snapshot>& snapshots) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : snapshots) {
        const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(s.grid.size()))));
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < g; ++r) {
            rows.push_back(std::vector<float>(s.grid.begin() + r * g, s.grid.begin() + (r + 1) * g));
        }
        out.push_back({{"sample", s.sample}, {"t", s.t}, {"grid", std::move(rows)}});
    }
    return out;
}

void save_model(DiffusionModel& model, const std::string& path, nlohmann::json extra) {
    nlohmann::json meta = std::move(extra);
    meta["schedule"] = {{"T", model.schedule.steps}, {"beta0", model.schedule.beta0}, {"betaT", model.schedule.betaT}};
    meta["codec"] = {{"I", model.codec.types()},
                     {"J", model.codec.stations()},
                     {"C_max", model.codec.c_max()},
                     {"grid", model.codec.size()}};
    std::vector<int> classes;
    for (const auto& c : CapacityClass::all()) classes.push_back(c.value());
    meta["classes"] = classes;
    save_checkpoint(model.denoiser, meta, path);
}

DiffusionModel load_model(const std::string& path, nlohmann::json* metadata) {
    Checkpoint ckpt = load_checkpoint(path);
    const auto& meta = ckpt.metadata;
    try {
        const auto& s = meta.at("schedule");
        const auto& c = meta.at("codec");
        NoiseSchedule schedule = make_schedule(s.at("beta0").get<double>(), s.at("betaT").get<double>(),
                                               s.at("T").get<int>());
        GridCodec codec(c.at("I").get<int>(), c.at("J").get<int>(), c.at("C_max").get<int>(),
                        c.at("grid").get<int>());
        if (codec.size() != ckpt.model.architecture().grid) {
            throw InvalidInput("codec grid does not match the architecture");
        }
        if (metadata) *metadata = meta;
        return DiffusionModel{std::move(ckpt.model), std::move(schedule), codec};
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("metadata", e.what());
    } catch (const InvalidInput& e) {
        throw CheckpointError("metadata", e.what());
    }
}

}  // namespace gms
