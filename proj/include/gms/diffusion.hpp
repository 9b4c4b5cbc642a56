#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gms/daydream.hpp"
#include "gms/denoiser.hpp"
#include "gms/domain.hpp"

namespace gms {

/// Linear variance schedule. Arrays are indexed by step t in [1, T] through
/// the accessors; element 0 of each vector belongs to t = 1.
struct NoiseSchedule {
    int steps = 0;
    double beta0 = 0.0;
    double betaT = 0.0;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> sigmas;

    double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
    double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t - 1)); }
    double sigma(int t) const { return sigmas.at(static_cast<std::size_t>(t - 1)); }

    bool operator==(const NoiseSchedule&) const = default;
};

NoiseSchedule make_schedule(double beta0 = 1e-4, double betaT = 0.02, int steps = 100);

/// z_t = alpha_t x0 + sigma_t eps, elementwise.
TensorF forward_diffuse(const TensorF& x0, int t, const TensorF& eps, const NoiseSchedule& schedule);

struct TrainConfig {
    double p_uncond = 0.1;
    int epochs = 30;
    int batch_size = 64;
    double lr = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-epoch mean training loss.
struct LossCurve {
    std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Denoiser together with the schedule and grid codec it was trained for.
struct DiffusionModel {
    DenoiserModel denoiser;
    NoiseSchedule schedule;
    GridCodec codec;
};

/// Fixed-epoch training on (configuration, class) pairs. Each example gets its
/// own step, noise and class dropout. The loss only covers the active block;
/// padding cells of z_t are pinned to the zero-count encoding, as in sampling.
LossCurve train(DiffusionModel& model, std::span<const DaydreamRecord> records, const TrainConfig& cfg,
                const EpochCallback& on_epoch = {});

void write_loss_csv(const LossCurve& curve, const std::string& path);

/// Anything that predicts noise for a batch {N, 1, p, p} at one step.
class NoiseEstimator {
public:
    virtual ~NoiseEstimator() = default;
    virtual TensorF estimate(const TensorF& z, int t, std::span<const int> labels) = 0;
    virtual int label(std::optional<CapacityClass> c) const = 0;
    virtual int grid() const = 0;
};

/// Adapts a denoiser (inference mode). Not safe to share between threads.
class DenoiserEstimator final : public NoiseEstimator {
public:
    explicit DenoiserEstimator(DenoiserModel& model) : model_(model) {}
    TensorF estimate(const TensorF& z, int t, std::span<const int> labels) override;
    int label(std::optional<CapacityClass> c) const override { return model_.label(c); }
    int grid() const override { return model_.architecture().grid; }

private:
    DenoiserModel& model_;
};

/// (1 + w) cond - w uncond.
TensorF guide(const TensorF& cond, const TensorF& uncond, double w);

/// Guided estimate for every grid of z under class c. w = 0 skips the
/// unconditional pass and returns the conditional estimate untouched.
TensorF guided_noise(NoiseEstimator& estimator, const TensorF& z, int t, CapacityClass c, double w);

/// x_{t-1} = (x_t - (beta_t / sigma_t) eps) / sqrt(1 - beta_t) + sqrt(beta_t) xi, xi = 0 at t = 1.
TensorF reverse_step(const TensorF& x, int t, const TensorF& eps_tilde, const NoiseSchedule& schedule,
                     Rng& rng);

struct SampleRequest {
    CapacityClass capacity;
    double w = 2.0;
    int count = 1;
    std::uint64_t seed = 0;
    /// Steps at which to record the latent; 0 records the decoded result.
    std::vector<int> snapshot_steps;

    void validate(int steps) const;
};

struct Snapshot {
    int sample = 0;
    int t = 0;
    std::vector<float> grid;
};

struct SampleResult {
    std::vector<Configuration> configs;
    std::vector<Snapshot> snapshots;
};

/// Ancestral sampling from x_T ~ N(0, I). Sample k draws from its own stream
/// derive_seed(seed, k), so results do not depend on batching.
SampleResult sample(NoiseEstimator& estimator, const NoiseSchedule& schedule, const GridCodec& codec,
                    const SampleRequest& req);

/// Works on a private copy of the denoiser, so concurrent calls are safe.
SampleResult sample(const DiffusionModel& model, const SampleRequest& req);

/// Same, but rejects a schedule that differs from the one the model was trained with.
SampleResult sample(const DiffusionModel& model, const NoiseSchedule& schedule, const SampleRequest& req);

nlohmann::json snapshots_json(const std::vector<Snapshot>& snapshots);

void save_model(DiffusionModel& model, const std::string& path, nlohmann::json extra = nlohmann::json::object());
DiffusionModel load_model(const std::string& path, nlohmann::json* metadata = nullptr);

}  // namespace gms
