#pragma once

// Finite-difference checks over every layer type and a small two-level U-Net.

#include <string>
#include <utility>
#include <vector>

#include "gms/nn/unet.hpp"
#include "gradcheck.hpp"

namespace gms::test {

struct LayerCheck {
    std::string layer;
    GradReport report;
};

template <typename Layer>
std::vector<nn::Parameter<double>*> params_of(Layer& layer) {
    std::vector<nn::Parameter<double>*> out;
    layer.parameters(out);
    return out;
}

inline void jitter(std::vector<nn::Parameter<double>*> params, std::mt19937_64& rng, double scale = 0.5) {
    std::normal_distribution<double> normal(0.0, scale);
    for (auto* p : params) {
        for (auto& v : p->value.data) v += normal(rng);
    }
}

/// `samples` entries per layer (parameters and inputs each).
inline std::vector<LayerCheck> run_gradient_suite(int samples, std::uint64_t seed) {
    using namespace nn;
    std::mt19937_64 rng(seed);
    std::vector<LayerCheck> out;

    for (int k : {1, 3}) {
        Conv2d<double> conv("conv", 3, 4, k);
        conv.init(rng);
        jitter(params_of(conv), rng, 0.1);
        TensorD x = random_tensor({3, 2, 5, 6}, rng);
        auto r = check_layer([&] { return params_of(conv); }, [&](Mode m) { return conv.forward(x, m); },
                             [&](const TensorD& dy) { return conv.backward(dy); }, &x, samples, rng);
        out.push_back({"Conv2d k=" + std::to_string(k), r});
    }
    {
        ConvTranspose2x2<double> up("up", 3, 2);
        up.init(rng);
        jitter(params_of(up), rng, 0.1);
        TensorD x = random_tensor({3, 2, 3, 4}, rng);
        auto r = check_layer([&] { return params_of(up); }, [&](Mode m) { return up.forward(x, m); },
                             [&](const TensorD& dy) { return up.backward(dy); }, &x, samples, rng);
        out.push_back({"ConvTranspose2x2", r});
    }
    {
        BatchNorm2d<double> bn("bn", 3);
        jitter(params_of(bn), rng);
        TensorD x = random_tensor({3, 2, 4, 4}, rng, 2.0);
        auto r = check_layer([&] { return params_of(bn); }, [&](Mode m) { return bn.forward(x, m); },
                             [&](const TensorD& dy) { return bn.backward(dy); }, &x, samples, rng);
        out.push_back({"BatchNorm2d", r});
    }
    {
        Gelu<double> act;
        TensorD x = random_tensor({2, 2, 4, 4}, rng, 2.0);
        auto r = check_layer([] { return std::vector<Parameter<double>*>{}; },
                             [&](Mode m) { return act.forward(x, m); },
                             [&](const TensorD& dy) { return act.backward(dy); }, &x, samples, rng);
        out.push_back({"Gelu", r});
    }
    {
        AvgPool2<double> pool;
        TensorD x = random_tensor({2, 2, 4, 6}, rng);
        auto r = check_layer([] { return std::vector<Parameter<double>*>{}; },
                             [&](Mode m) { return pool.forward(x, m); },
                             [&](const TensorD& dy) { return pool.backward(dy); }, &x, samples, rng);
        out.push_back({"AvgPool2", r});
    }
    {
        Linear<double> fc("fc", 8, 6);
        fc.init(rng);
        TensorD x = random_tensor({3, 8}, rng);
        auto r = check_layer([&] { return params_of(fc); }, [&](Mode m) { return fc.forward(x, m); },
                             [&](const TensorD& dy) { return fc.backward(dy); }, &x, samples, rng);
        out.push_back({"Linear", r});
    }
    {
        Embedding<double> emb("emb", 12, 6);
        emb.init(rng);
        const std::vector<int> index{0, 3, 3, 1, 11, 7, 5};
        auto r = check_layer([&] { return params_of(emb); }, [&](Mode m) { return emb.forward(index, m); },
                             [&](const TensorD& dy) {
                                 emb.backward(dy);
                                 return TensorD();
                             },
                             nullptr, samples, rng);
        out.push_back({"Embedding", r});
    }
    for (auto [cin, cout] : {std::pair{3, 3}, std::pair{2, 4}}) {
        ResidualBlock<double> block("block", cin, cout, 4);
        block.init(rng);
        jitter(params_of(block), rng, 0.1);
        TensorD x = random_tensor({cin, 2, 4, 4}, rng);
        TensorD e = random_tensor({2, 4}, rng);
        TensorD demb({2, 4});
        auto run = [&](Mode m) { return block.forward(x, e, m); };
        auto back = [&](const TensorD& dy) {
            demb.zero();
            return block.backward(dy, demb);
        };
        auto r = check_layer([&] { return params_of(block); }, run, back, &x, samples, rng);
        // The embedding input gets its own pass so its gradient is checked too.
        const TensorD y = run(Mode::kTrain);
        const TensorD w = random_tensor(y.shape, rng);
        back(w);
        const nn::AlignedVector<double> analytic = demb.data;
        auto re = check_entries(e.data, analytic, [&] { return dot(run(Mode::kTrain), w); }, samples, rng);
        r.max_rel = std::max(r.max_rel, re.max_rel);
        r.checked += re.checked;
        out.push_back({"ResidualBlock " + std::to_string(cin) + "->" + std::to_string(cout), r});
    }
    {
        Architecture arch;
        arch.grid = 8;
        arch.widths = {2, 3, 4};
        arch.embed_dim = 4;
        arch.class_count = 3;
        UNet<double> net(arch);
        net.init(seed ^ 0x5eed, false);
        TensorD x = random_tensor({2, 1, 8, 8}, rng);
        const std::vector<int> steps{3, 17};
        const std::vector<int> classes{1, 3};
        auto r = check_layer([&] { return net.parameters(); },
                             [&](Mode m) { return net.forward(x, steps, classes, m); },
                             [&](const TensorD& dy) { return net.backward(dy); }, &x, samples, rng);
        out.push_back({"UNet (toy, 2 levels)", r});
    }
    return out;
}

}  // namespace gms::test
