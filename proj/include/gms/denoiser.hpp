#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gms/domain.hpp"
#include "gms/nn/unet.hpp"

namespace gms {

using nn::Architecture;
using nn::Mode;
using TensorF = nn::Tensor<float>;

/// Gradients of every parameter, aligned with DenoiserModel::parameter_names().
struct GradientTape {
    std::vector<std::string> names;
    std::vector<TensorF> grads;
};

/// The learnable noise estimator h(z_t, t, c).
class DenoiserModel {
public:
    explicit DenoiserModel(const Architecture& arch = {}, std::uint64_t seed = 0);

    const Architecture& architecture() const noexcept { return net_.architecture(); }
    int null_label() const noexcept { return architecture().null_class(); }

    /// Embedding row of a capacity class, or of the null label when absent.
    int label(std::optional<CapacityClass> c) const;

    /// z: {N, 1, p, p}. labels are embedding rows (see label()).
    TensorF forward_estimate(const TensorF& z, std::span<const int> steps,
                             std::span<const int> labels, Mode mode);

    /// Single-grid convenience overload.
    TensorF forward_estimate(const TensorF& z, int step, std::optional<CapacityClass> c,
                             Mode mode = Mode::kInference);

    /// Gradients of the loss whose derivative w.r.t. the last training output is `seed`.
    GradientTape backward(const TensorF& seed);

    std::vector<std::string> parameter_names();
    std::size_t parameter_count();
    bool all_finite();

    nn::UNet<float>& net() noexcept { return net_; }

private:
    nn::UNet<float> net_;
};

struct LossAndSeed {
    double loss = 0.0;
    TensorF seed;
};

/// Mean squared error over the cells where mask != 0 (per-entry mean, so a
/// zero prediction of standard-normal targets scores about 1).
LossAndSeed masked_squared_error(const TensorF& prediction, const TensorF& target,
                                 std::span<const float> mask);

template <typename T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<nn::Tensor<T>> m;
    std::vector<nn::Tensor<T>> v;
};

/// One Adam step. Throws DivergenceError (naming the parameter) before
/// touching anything if a gradient is non-finite.
template <typename T>
void adam_step(std::span<nn::Parameter<T>* const> params, std::span<const nn::Tensor<T>> grads,
               AdamState<T>& state, double lr) {
    if (grads.size() != params.size()) {
        throw InvalidInput("gradient tape has " + std::to_string(grads.size()) +
                           " entries, model has " + std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].shape != params[k]->value.shape) {
            throw InvalidInput("gradient shape mismatch for " + params[k]->name);
        }
        for (T g : grads[k].data) {
            if (!std::isfinite(static_cast<double>(g))) {
                throw DivergenceError("non-finite gradient in " + params[k]->name, params[k]->name);
            }
        }
    }
    if (state.m.size() != params.size()) {
        state.m.clear();
        state.v.clear();
        for (auto* p : params) {
            state.m.emplace_back(p->value.shape);
            state.v.emplace_back(p->value.shape);
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& value = params[k]->value.data;
        auto& m = state.m[k].data;
        auto& v = state.v[k].data;
        const auto& g = grads[k].data;
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = static_cast<T>(state.beta1 * m[i] + (1.0 - state.beta1) * g[i]);
            v[i] = static_cast<T>(state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i]);
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            value[i] = static_cast<T>(value[i] - lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

void apply_update(DenoiserModel& model, const GradientTape& tape, AdamState<float>& state,
                  double lr);

/// Binary checkpoint: "GMSF", u32 version, u64 metadata length, JSON metadata,
/// u32 tensor count, then per tensor: u32 name length, name, u8 dtype
/// (0 = f32, 1 = f64), u32 rank, u64 dims[rank], little-endian payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    DenoiserModel model;
    nlohmann::json metadata;
};

std::string serialize_checkpoint(DenoiserModel& model, const nlohmann::json& metadata);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(DenoiserModel& model, const nlohmann::json& metadata, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gms
