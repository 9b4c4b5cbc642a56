#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gms/nn/layers.hpp"

namespace gms::nn {

struct Architecture {
    int grid = 16;
    /// Channel widths at full, half and quarter resolution.
    std::array<int, 3> widths{16, 32, 64};
    int embed_dim = 64;
    /// Number of real class labels; the embedding table holds one more row for the null label.
    int class_count = 11;

    int null_class() const noexcept { return class_count; }
    void validate() const {
        if (grid < 4 || grid % 4 != 0) throw InvalidInput("grid size must be a positive multiple of 4");
        for (int w : widths) {
            if (w < 1) throw InvalidInput("channel widths must be positive");
        }
        if (embed_dim < 2 || embed_dim % 2 != 0) throw InvalidInput("embed_dim must be even and >= 2");
        if (class_count < 1) throw InvalidInput("class_count must be positive");
    }
    bool operator==(const Architecture&) const = default;
};

inline void to_json(nlohmann::json& j, const Architecture& a) {
    j = nlohmann::json{{"grid", a.grid},
                       {"widths", a.widths},
                       {"embed_dim", a.embed_dim},
                       {"class_count", a.class_count}};
}

inline void from_json(const nlohmann::json& j, Architecture& a) {
    a.grid = j.at("grid").get<int>();
    a.widths = j.at("widths").get<std::array<int, 3>>();
    a.embed_dim = j.at("embed_dim").get<int>();
    a.class_count = j.at("class_count").get<int>();
}

/// Two-level U-Net noise estimator conditioned on step and class.
///
///   in_conv -> enc1 ----------------------------(concat)-> dec1 -> out_conv
///                 \-pool-> enc2 -----------(concat)-> dec2 -up-/
///                             \-pool-> mid -up-/
///
/// The output head is zero-initialized, so a fresh model predicts zero noise.
template <typename T>
class UNet {
public:
    UNet() : UNet(Architecture{}) {}
    explicit UNet(const Architecture& arch) : arch_(arch) {
        arch.validate();
        const auto [c1, c2, c3] = arch.widths;
        const int e = arch.embed_dim;
        time1_ = Linear<T>("time.fc1", e, e);
        time2_ = Linear<T>("time.fc2", e, e);
        class_emb_ = Embedding<T>("class", arch.class_count + 1, e);
        in_conv_ = Conv2d<T>("in_conv", 1, c1, 3);
        enc1_ = ResidualBlock<T>("enc1", c1, c1, e);
        enc2_ = ResidualBlock<T>("enc2", c1, c2, e);
        mid_ = ResidualBlock<T>("mid", c2, c3, e);
        up2_ = ConvTranspose2x2<T>("up2", c3, c2);
        dec2_ = ResidualBlock<T>("dec2", 2 * c2, c2, e);
        up1_ = ConvTranspose2x2<T>("up1", c2, c1);
        dec1_ = ResidualBlock<T>("dec1", 2 * c1, c1, e);
        out_conv_ = Conv2d<T>("out_conv", c1, 1, 1);
    }

    const Architecture& architecture() const noexcept { return arch_; }

    /// Random weights everywhere; the output head stays zero unless `zero_head` is false.
    void init(std::uint64_t seed, bool zero_head = true) {
        std::mt19937_64 rng(seed);
        time1_.init(rng);
        time2_.init(rng);
        class_emb_.init(rng);
        in_conv_.init(rng);
        enc1_.init(rng);
        enc2_.init(rng);
        mid_.init(rng);
        up2_.init(rng);
        dec2_.init(rng);
        up1_.init(rng);
        dec1_.init(rng);
        out_conv_.init(rng);
        if (zero_head) {
            out_conv_.weight().value.zero();
            out_conv_.bias().value.zero();
        }
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        time1_.parameters(out);
        time2_.parameters(out);
        class_emb_.parameters(out);
        in_conv_.parameters(out);
        enc1_.parameters(out);
        enc2_.parameters(out);
        mid_.parameters(out);
        up2_.parameters(out);
        dec2_.parameters(out);
        up1_.parameters(out);
        dec1_.parameters(out);
        out_conv_.parameters(out);
        return out;
    }

    std::vector<Buffer<T>> buffers() {
        std::vector<Buffer<T>> out;
        for (auto* b : {&enc1_, &enc2_, &mid_, &dec2_, &dec1_}) b->buffers(out);
        return out;
    }

    void zero_grad() {
        for (auto* p : parameters()) p->grad.zero();
    }

    /// Replaces a skip connection's features with zeros (0 = none, 1 = full-res, 2 = half-res).
    void set_skip_ablation(int level) { ablate_skip_ = level; }

    /// x: {1, N, grid, grid} (equivalently {N, 1, grid, grid}); steps, classes: N entries.
    Tensor<T> forward(const Tensor<T>& x, std::span<const int> steps, std::span<const int> classes,
                      Mode mode) {
        const int n = x.rank() == 4 ? x.dim(0) * x.dim(1) : 0;
        if (x.rank() != 4 || x.dim(2) != arch_.grid || x.dim(3) != arch_.grid ||
            std::min(x.dim(0), x.dim(1)) != 1) {
            throw InvalidInput("denoiser input must be {N, 1, " + std::to_string(arch_.grid) + ", " +
                               std::to_string(arch_.grid) + "}, got " + shape_string(x.shape));
        }
        if (steps.size() != static_cast<std::size_t>(n) || classes.size() != static_cast<std::size_t>(n)) {
            throw InvalidInput("steps and classes must have one entry per batch element");
        }
        for (int c : classes) {
            if (c < 0 || c > arch_.class_count) {
                throw InvalidInput("class label " + std::to_string(c) + " outside embedding table");
            }
        }
        Tensor<T> input = x;
        input.shape = {1, n, arch_.grid, arch_.grid};

        // Conditioning vector shared by every block.
        Tensor<T> temb = time2_.forward(
            time_act_.forward(time1_.forward(sinusoidal_embedding<T>(steps, arch_.embed_dim), mode), mode),
            mode);
        add_inplace(temb, class_emb_.forward(classes, mode));
        Tensor<T> emb = emb_act_.forward(temb, mode);

        Tensor<T> h0 = in_conv_.forward(input, mode);
        Tensor<T> s1 = enc1_.forward(h0, emb, mode);
        Tensor<T> s2 = enc2_.forward(pool1_.forward(s1, mode), emb, mode);
        Tensor<T> m = mid_.forward(pool2_.forward(s2, mode), emb, mode);

        Tensor<T> u2 = up2_.forward(m, mode);
        if (ablate_skip_ == 2) s2.zero();
        Tensor<T> d2 = dec2_.forward(concat_channels(u2, s2), emb, mode);
        Tensor<T> u1 = up1_.forward(d2, mode);
        if (ablate_skip_ == 1) s1.zero();
        Tensor<T> d1 = dec1_.forward(concat_channels(u1, s1), emb, mode);
        Tensor<T> out = out_conv_.forward(d1, mode);
        out.shape = x.shape;
        trained_forward_ = mode == Mode::kTrain;
        return out;
    }

    /// Back-propagates d(loss)/d(output); parameter gradients are overwritten.
    Tensor<T> backward(const Tensor<T>& dout) {
        if (!trained_forward_) throw StateError("backward requires a preceding training forward pass");
        trained_forward_ = false;
        zero_grad();
        const int n = dout.dim(0) * dout.dim(1);
        Tensor<T> g = dout;
        g.shape = {1, n, arch_.grid, arch_.grid};

        Tensor<T> demb({n, arch_.embed_dim});
        const auto [c1, c2, c3] = arch_.widths;

        Tensor<T> dd1 = out_conv_.backward(g);
        auto [du1, ds1_cat] = split_channels(dec1_.backward(dd1, demb), c1);
        Tensor<T> dd2 = up1_.backward(du1);
        auto [du2, ds2_cat] = split_channels(dec2_.backward(dd2, demb), c2);
        Tensor<T> dm = up2_.backward(du2);

        if (ablate_skip_ == 2) ds2_cat.zero();
        if (ablate_skip_ == 1) ds1_cat.zero();
        Tensor<T> ds2 = pool2_.backward(mid_.backward(dm, demb));
        add_inplace(ds2, ds2_cat);
        Tensor<T> ds1 = pool1_.backward(enc2_.backward(ds2, demb));
        add_inplace(ds1, ds1_cat);
        Tensor<T> dx = in_conv_.backward(enc1_.backward(ds1, demb));

        Tensor<T> dtemb = emb_act_.backward(demb);
        class_emb_.backward(dtemb);
        time1_.backward(time_act_.backward(time2_.backward(dtemb)));

        dx.shape = dout.shape;
        return dx;
    }

    /// Copies parameter and buffer values from a model of another scalar type.
    template <typename U>
    void copy_from(UNet<U>& other) {
        auto dst = parameters();
        auto src = other.parameters();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k]->value = src[k]->value.template cast<T>();
        auto dbuf = buffers();
        auto sbuf = other.buffers();
        for (std::size_t k = 0; k < dbuf.size(); ++k) *dbuf[k].tensor = sbuf[k].tensor->template cast<T>();
    }

private:
    Architecture arch_;
    Linear<T> time1_, time2_;
    Gelu<T> time_act_, emb_act_;
    Embedding<T> class_emb_;
    Conv2d<T> in_conv_;
    ResidualBlock<T> enc1_, enc2_, mid_, dec2_, dec1_;
    AvgPool2<T> pool1_, pool2_;
    ConvTranspose2x2<T> up2_, up1_;
    Conv2d<T> out_conv_;
    int ablate_skip_ = 0;
    bool trained_forward_ = false;
};

}  // namespace gms::nn
