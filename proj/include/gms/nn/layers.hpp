#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/SpecialFunctions>

#include "gms/nn/conv_kernel.hpp"
#include "gms/nn/tensor.hpp"

namespace gms::nn {

namespace detail {

inline void require_cache(bool present, const std::string& layer) {
    if (!present) {
        throw StateError(layer + ": backward called without a training forward pass");
    }
}

template <typename T>
void he_normal(Tensor<T>& w, int fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : w.data) v = static_cast<T>(dist(rng));
}

template <typename T>
void uniform_init(Tensor<T>& w, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w.data) v = static_cast<T>(dist(rng));
}

}  // namespace detail

/// Stride-1 convolution with "same" zero padding; kernel 1x1 or 3x3.
template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(const std::string& name, int in_channels, int out_channels, int kernel)
        : cin_(in_channels), cout_(out_channels), k_(kernel),
          weight_(name + ".weight", {out_channels, in_channels, kernel, kernel}),
          bias_(name + ".bias", {out_channels}) {
        if (kernel != 1 && kernel != 3) throw InvalidInput("Conv2d supports kernel 1 or 3");
    }

    void init(std::mt19937_64& rng) {
        detail::he_normal(weight_.value, cin_ * k_ * k_, rng);
        bias_.value.zero();
    }

    void parameters(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    Parameter<T>& weight() { return weight_; }
    Parameter<T>& bias() { return bias_; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        n_ = x.dim(1);
        h_ = x.dim(2);
        w_ = x.dim(3);
        const Eigen::Index positions = static_cast<Eigen::Index>(n_) * h_ * w_;
        const Eigen::Index rows = static_cast<Eigen::Index>(cin_) * k_ * k_;

        Tensor<T> y({cout_, n_, h_, w_});
        if (k_ == 1) {
            auto ym = as_matrix(y, cout_, positions);
            ym.noalias() = as_matrix(weight_.value, cout_, rows) * as_matrix(x, rows, positions);
            ym.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.value.ptr(), cout_);
        } else {
            detail::conv3x3_direct(x.ptr(), cin_, n_, h_, w_, weight_.value.ptr(), bias_.value.ptr(), cout_,
                                   y.ptr());
        }
        if (mode == Mode::kTrain) x_ = x;
        else x_.clear();
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        detail::require_cache(!x_.empty(), weight_.name);
        const Eigen::Index positions = static_cast<Eigen::Index>(n_) * h_ * w_;
        const Eigen::Index rows = static_cast<Eigen::Index>(cin_) * k_ * k_;
        Tensor<T> unfolded;
        if (k_ == 1) {
            unfolded = std::move(x_);
        } else {
            unfolded = Tensor<T>({static_cast<int>(rows), static_cast<int>(positions)});
            im2col(x_, unfolded);
        }
        x_.clear();
        auto dym = as_matrix(dy, cout_, positions);
        auto cols = as_matrix(unfolded, rows, positions);

        as_matrix(weight_.grad, cout_, rows).noalias() += dym * cols.transpose();
        auto db = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.grad.ptr(), cout_);
        db += dym.rowwise().sum();

        auto wm = as_matrix(weight_.value, cout_, rows);
        Tensor<T> dx({cin_, n_, h_, w_});
        if (k_ == 1) {
            as_matrix(dx, rows, positions).noalias() = wm.transpose() * dym;
        } else {
            // Reuse the cached unfold buffer for the column gradients.
            as_matrix(unfolded, rows, positions).noalias() = wm.transpose() * dym;
            col2im(unfolded, dx);
        }
        return dx;
    }

private:

    // Row r = (ci*3 + ky)*3 + kx, column = (n*H + h)*W + w.
    void im2col(const Tensor<T>& x, Tensor<T>& cols) const {
        const std::size_t plane = static_cast<std::size_t>(h_) * w_;
        const std::size_t positions = plane * n_;
        for (int ci = 0; ci < cin_; ++ci) {
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    T* row = cols.ptr() + ((static_cast<std::size_t>(ci) * 3 + ky) * 3 + kx) * positions;
                    const int shift = kx - 1;
                    const int lo = std::max(0, -shift), hi = std::min(w_, w_ - shift);
                    for (int n = 0; n < n_; ++n) {
                        const T* src = x.ptr() + (static_cast<std::size_t>(ci) * n_ + n) * plane;
                        for (int h = 0; h < h_; ++h) {
                            T* dst = row + (static_cast<std::size_t>(n) * h_ + h) * w_;
                            const int hh = h + ky - 1;
                            if (hh < 0 || hh >= h_) {
                                std::fill(dst, dst + w_, T(0));
                                continue;
                            }
                            const T* srow = src + static_cast<std::size_t>(hh) * w_ + shift;
                            std::fill(dst, dst + lo, T(0));
                            std::copy(srow + lo, srow + hi, dst + lo);
                            std::fill(dst + hi, dst + w_, T(0));
                        }
                    }
                }
            }
        }
    }

    void col2im(const Tensor<T>& cols, Tensor<T>& dx) const {
        const std::size_t plane = static_cast<std::size_t>(h_) * w_;
        const std::size_t positions = plane * n_;
        for (int ci = 0; ci < cin_; ++ci) {
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const T* row = cols.ptr() + ((static_cast<std::size_t>(ci) * 3 + ky) * 3 + kx) * positions;
                    const int shift = kx - 1;
                    const int lo = std::max(0, -shift), hi = std::min(w_, w_ - shift);
                    for (int n = 0; n < n_; ++n) {
                        T* dst = dx.ptr() + (static_cast<std::size_t>(ci) * n_ + n) * plane;
                        for (int h = 0; h < h_; ++h) {
                            const int hh = h + ky - 1;
                            if (hh < 0 || hh >= h_) continue;
                            const T* src = row + (static_cast<std::size_t>(n) * h_ + h) * w_;
                            T* drow = dst + static_cast<std::size_t>(hh) * w_ + shift;
                            for (int w = lo; w < hi; ++w) drow[w] += src[w];
                        }
                    }
                }
            }
        }
    }

    int cin_ = 0, cout_ = 0, k_ = 3;
    int n_ = 0, h_ = 0, w_ = 0;
    Parameter<T> weight_, bias_;
    Tensor<T> x_;
};

/// 2x2 stride-2 transposed convolution; weight layout {Cin, Cout, 2, 2}.
template <typename T>
class ConvTranspose2x2 {
public:
    ConvTranspose2x2() = default;
    ConvTranspose2x2(const std::string& name, int in_channels, int out_channels)
        : cin_(in_channels), cout_(out_channels),
          weight_(name + ".weight", {in_channels, out_channels, 2, 2}),
          bias_(name + ".bias", {out_channels}) {}

    void init(std::mt19937_64& rng) {
        detail::he_normal(weight_.value, cin_, rng);
        bias_.value.zero();
    }

    void parameters(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        n_ = x.dim(1);
        h_ = x.dim(2);
        w_ = x.dim(3);
        const Eigen::Index positions = static_cast<Eigen::Index>(n_) * h_ * w_;
        Tensor<T> expanded({cout_ * 4, static_cast<int>(positions)});
        as_matrix(expanded, cout_ * 4, positions).noalias() =
            as_matrix(weight_.value, cin_, cout_ * 4).transpose() * as_matrix(x, cin_, positions);

        Tensor<T> y({cout_, n_, 2 * h_, 2 * w_});
        const int oh = 2 * h_, ow = 2 * w_;
        for (int co = 0; co < cout_; ++co) {
            const T b = bias_.value[static_cast<std::size_t>(co)];
            for (int d = 0; d < 4; ++d) {
                const int dy = d / 2, dx = d % 2;
                const T* src = expanded.ptr() + (static_cast<std::size_t>(co) * 4 + d) * positions;
                for (int n = 0; n < n_; ++n) {
                    T* dst = y.ptr() + (static_cast<std::size_t>(co) * n_ + n) * oh * ow;
                    for (int h = 0; h < h_; ++h) {
                        for (int w = 0; w < w_; ++w) {
                            dst[(2 * h + dy) * ow + 2 * w + dx] =
                                src[(static_cast<std::size_t>(n) * h_ + h) * w_ + w] + b;
                        }
                    }
                }
            }
        }
        if (mode == Mode::kTrain) x_ = x;
        else x_.clear();
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        detail::require_cache(!x_.empty(), weight_.name);
        const Eigen::Index positions = static_cast<Eigen::Index>(n_) * h_ * w_;
        const int oh = 2 * h_, ow = 2 * w_;
        Tensor<T> dexp({cout_ * 4, static_cast<int>(positions)});
        for (int co = 0; co < cout_; ++co) {
            T bsum = 0;
            for (int d = 0; d < 4; ++d) {
                const int ddy = d / 2, ddx = d % 2;
                T* dst = dexp.ptr() + (static_cast<std::size_t>(co) * 4 + d) * positions;
                for (int n = 0; n < n_; ++n) {
                    const T* src = dy.ptr() + (static_cast<std::size_t>(co) * n_ + n) * oh * ow;
                    for (int h = 0; h < h_; ++h) {
                        for (int w = 0; w < w_; ++w) {
                            T g = src[(2 * h + ddy) * ow + 2 * w + ddx];
                            dst[(static_cast<std::size_t>(n) * h_ + h) * w_ + w] = g;
                            bsum += g;
                        }
                    }
                }
            }
            bias_.grad[static_cast<std::size_t>(co)] += bsum;
        }
        auto dexpm = as_matrix(dexp, cout_ * 4, positions);
        auto xm = as_matrix(x_, cin_, positions);
        as_matrix(weight_.grad, cin_, cout_ * 4).noalias() += xm * dexpm.transpose();
        Tensor<T> dx({cin_, n_, h_, w_});
        as_matrix(dx, cin_, positions).noalias() = as_matrix(weight_.value, cin_, cout_ * 4) * dexpm;
        x_.clear();
        return dx;
    }

private:
    int cin_ = 0, cout_ = 0;
    int n_ = 0, h_ = 0, w_ = 0;
    Parameter<T> weight_, bias_;
    Tensor<T> x_;
};

/// Per-channel batch normalization over (N, H, W).
template <typename T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(const std::string& name, int channels, double momentum = 0.9, double eps = 1e-5)
        : c_(channels), momentum_(momentum), eps_(eps),
          gamma_(name + ".gamma", {channels}), beta_(name + ".beta", {channels}),
          running_mean_({channels}), running_var_({channels}, T(1)),
          mean_name_(name + ".running_mean"), var_name_(name + ".running_var") {
        gamma_.value.fill(T(1));
    }

    void parameters(std::vector<Parameter<T>*>& out) {
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }

    void buffers(std::vector<Buffer<T>>& out) {
        out.push_back({mean_name_, &running_mean_});
        out.push_back({var_name_, &running_var_});
    }

    Parameter<T>& gamma() { return gamma_; }
    Parameter<T>& beta() { return beta_; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        const std::size_t per = x.size() / static_cast<std::size_t>(c_);
        Tensor<T> y(x.shape);
        if (mode == Mode::kInference) {
            for (int c = 0; c < c_; ++c) {
                const T inv = T(1) / std::sqrt(running_var_[c] + static_cast<T>(eps_));
                const T scale = gamma_.value[c] * inv;
                const T shift = beta_.value[c] - running_mean_[c] * scale;
                const T* src = x.ptr() + c * per;
                T* dst = y.ptr() + c * per;
                for (std::size_t k = 0; k < per; ++k) dst[k] = src[k] * scale + shift;
            }
            xhat_.clear();
            return y;
        }
        xhat_ = Tensor<T>(x.shape);
        inv_std_.assign(static_cast<std::size_t>(c_), T(0));
        for (int c = 0; c < c_; ++c) {
            const T* src = x.ptr() + c * per;
            double mean = 0.0;
            for (std::size_t k = 0; k < per; ++k) mean += src[k];
            mean /= static_cast<double>(per);
            double var = 0.0;
            for (std::size_t k = 0; k < per; ++k) {
                double d = src[k] - mean;
                var += d * d;
            }
            var /= static_cast<double>(per);
            const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
            inv_std_[static_cast<std::size_t>(c)] = inv;
            T* xh = xhat_.ptr() + c * per;
            T* dst = y.ptr() + c * per;
            const T m = static_cast<T>(mean);
            for (std::size_t k = 0; k < per; ++k) {
                xh[k] = (src[k] - m) * inv;
                dst[k] = gamma_.value[c] * xh[k] + beta_.value[c];
            }
            const double unbiased = per > 1 ? var * per / (per - 1) : var;
            running_mean_[c] = static_cast<T>(momentum_ * running_mean_[c] + (1 - momentum_) * mean);
            running_var_[c] = static_cast<T>(momentum_ * running_var_[c] + (1 - momentum_) * unbiased);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        detail::require_cache(!xhat_.empty(), gamma_.name);
        const std::size_t per = dy.size() / static_cast<std::size_t>(c_);
        Tensor<T> dx(dy.shape);
        for (int c = 0; c < c_; ++c) {
            const T* g = dy.ptr() + c * per;
            const T* xh = xhat_.ptr() + c * per;
            T dbeta = 0, dgamma = 0;
            for (std::size_t k = 0; k < per; ++k) {
                dbeta += g[k];
                dgamma += g[k] * xh[k];
            }
            gamma_.grad[c] += dgamma;
            beta_.grad[c] += dbeta;
            const T scale = gamma_.value[c] * inv_std_[static_cast<std::size_t>(c)] / static_cast<T>(per);
            T* d = dx.ptr() + c * per;
            for (std::size_t k = 0; k < per; ++k) {
                d[k] = scale * (static_cast<T>(per) * g[k] - dbeta - xh[k] * dgamma);
            }
        }
        xhat_.clear();
        return dx;
    }

private:
    int c_ = 0;
    double momentum_ = 0.9, eps_ = 1e-5;
    Parameter<T> gamma_, beta_;
    Tensor<T> running_mean_, running_var_;
    std::string mean_name_, var_name_;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

/// Exact (erf-based) GELU.
template <typename T>
class Gelu {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        Tensor<T> y(x.shape);
        auto xa = array(x);
        array(y) = T(0.5) * xa * (T(1) + (xa * kInvSqrt2).erf());
        if (mode == Mode::kTrain) x_ = x;
        else x_.clear();
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        detail::require_cache(!x_.empty(), "gelu");
        Tensor<T> dx(dy.shape);
        auto xa = array(x_);
        array(dx) = array(dy) * (T(0.5) * (T(1) + (xa * kInvSqrt2).erf()) +
                                 xa * kInvSqrt2Pi * (T(-0.5) * xa.square()).exp());
        x_.clear();
        return dx;
    }

private:
    static constexpr T kInvSqrt2 = static_cast<T>(0.70710678118654752440);
    static constexpr T kInvSqrt2Pi = static_cast<T>(0.39894228040143267794);

    static Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> array(Tensor<T>& t) {
        return {t.ptr(), static_cast<Eigen::Index>(t.size())};
    }
    static Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> array(const Tensor<T>& t) {
        return {t.ptr(), static_cast<Eigen::Index>(t.size())};
    }

    Tensor<T> x_;
};

/// 2x2 average pooling, stride 2.
template <typename T>
class AvgPool2 {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode /*mode*/) {
        in_shape_ = x.shape;
        const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
        Tensor<T> y({x.dim(0), x.dim(1), h / 2, w / 2});
        for (int p = 0; p < planes; ++p) {
            const T* src = x.ptr() + static_cast<std::size_t>(p) * h * w;
            T* dst = y.ptr() + static_cast<std::size_t>(p) * (h / 2) * (w / 2);
            for (int r = 0; r < h / 2; ++r) {
                for (int c = 0; c < w / 2; ++c) {
                    dst[r * (w / 2) + c] = T(0.25) * (src[2 * r * w + 2 * c] + src[2 * r * w + 2 * c + 1] +
                                                     src[(2 * r + 1) * w + 2 * c] +
                                                     src[(2 * r + 1) * w + 2 * c + 1]);
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        detail::require_cache(!in_shape_.empty(), "avgpool");
        Tensor<T> dx(in_shape_);
        const int planes = dx.dim(0) * dx.dim(1), h = dx.dim(2), w = dx.dim(3);
        for (int p = 0; p < planes; ++p) {
            const T* src = dy.ptr() + static_cast<std::size_t>(p) * (h / 2) * (w / 2);
            T* dst = dx.ptr() + static_cast<std::size_t>(p) * h * w;
            for (int r = 0; r < h; ++r) {
                for (int c = 0; c < w; ++c) dst[r * w + c] = T(0.25) * src[(r / 2) * (w / 2) + c / 2];
            }
        }
        return dx;
    }

private:
    std::vector<int> in_shape_;
};

/// Fully connected layer on row-major {N, in} inputs; weight {out, in}.
template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, int in, int out)
        : in_(in), out_(out), weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}) {}

    void init(std::mt19937_64& rng) {
        detail::uniform_init(weight_.value, 1.0 / std::sqrt(static_cast<double>(in_)), rng);
        detail::uniform_init(bias_.value, 1.0 / std::sqrt(static_cast<double>(in_)), rng);
    }

    void parameters(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    Parameter<T>& weight() { return weight_; }
    Parameter<T>& bias() { return bias_; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        const int n = x.dim(0);
        Tensor<T> y({n, out_});
        auto ym = as_matrix(y, n, out_);
        ym.noalias() = as_matrix(x, n, in_) * as_matrix(weight_.value, out_, in_).transpose();
        ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.value.ptr(), out_);
        if (mode == Mode::kTrain) x_ = x;
        else x_.clear();
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        detail::require_cache(!x_.empty(), weight_.name);
        const int n = dy.dim(0);
        auto dym = as_matrix(dy, n, out_);
        as_matrix(weight_.grad, out_, in_).noalias() += dym.transpose() * as_matrix(x_, n, in_);
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.grad.ptr(), out_) += dym.colwise().sum();
        Tensor<T> dx({n, in_});
        as_matrix(dx, n, in_).noalias() = dym * as_matrix(weight_.value, out_, in_);
        x_.clear();
        return dx;
    }

private:
    int in_ = 0, out_ = 0;
    Parameter<T> weight_, bias_;
    Tensor<T> x_;
};

/// Lookup table; row `rows - 1` is conventionally the null label.
template <typename T>
class Embedding {
public:
    Embedding() = default;
    Embedding(const std::string& name, int rows, int dim)
        : rows_(rows), dim_(dim), table_(name + ".table", {rows, dim}) {}

    void init(std::mt19937_64& rng) {
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : table_.value.data) v = static_cast<T>(dist(rng));
    }

    void parameters(std::vector<Parameter<T>*>& out) { out.push_back(&table_); }

    int rows() const noexcept { return rows_; }

    Tensor<T> forward(std::span<const int> index, Mode mode) {
        const int n = static_cast<int>(index.size());
        Tensor<T> y({n, dim_});
        for (int k = 0; k < n; ++k) {
            const int r = index[static_cast<std::size_t>(k)];
            if (r < 0 || r >= rows_) {
                throw InvalidInput("embedding index " + std::to_string(r) + " outside table of " +
                                   std::to_string(rows_) + " rows");
            }
            std::copy_n(table_.value.ptr() + static_cast<std::size_t>(r) * dim_, dim_,
                        y.ptr() + static_cast<std::size_t>(k) * dim_);
        }
        if (mode == Mode::kTrain) index_.assign(index.begin(), index.end());
        else index_.clear();
        return y;
    }

    void backward(const Tensor<T>& dy) {
        detail::require_cache(!index_.empty(), table_.name);
        for (std::size_t k = 0; k < index_.size(); ++k) {
            T* row = table_.grad.ptr() + static_cast<std::size_t>(index_[k]) * dim_;
            const T* g = dy.ptr() + k * dim_;
            for (int d = 0; d < dim_; ++d) row[d] += g[d];
        }
        index_.clear();
    }

private:
    int rows_ = 0, dim_ = 0;
    Parameter<T> table_;
    std::vector<int> index_;
};

/// Fixed sinusoidal features of the diffusion step: sin(t f_k), cos(t f_k).
template <typename T>
Tensor<T> sinusoidal_embedding(std::span<const int> steps, int dim) {
    const int half = dim / 2;
    Tensor<T> out({static_cast<int>(steps.size()), dim});
    for (std::size_t n = 0; n < steps.size(); ++n) {
        for (int k = 0; k < half; ++k) {
            const double freq = std::exp(-std::log(10000.0) * k / half);
            const double arg = steps[n] * freq;
            out[n * dim + k] = static_cast<T>(std::sin(arg));
            out[n * dim + half + k] = static_cast<T>(std::cos(arg));
        }
    }
    return out;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
}

/// Stacks two {C, N, H, W} tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2), a.dim(3)});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first) {
    Tensor<T> a({first, x.dim(1), x.dim(2), x.dim(3)});
    Tensor<T> b({x.dim(0) - first, x.dim(1), x.dim(2), x.dim(3)});
    std::copy(x.data.begin(), x.data.begin() + static_cast<std::ptrdiff_t>(a.size()), a.data.begin());
    std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(a.size()), x.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

/// conv -> BN -> GELU, add the projected step/class embedding, conv -> BN ->
/// GELU, then add the (1x1-projected when widths differ) input.
template <typename T>
class ResidualBlock {
public:
    ResidualBlock() = default;
    ResidualBlock(const std::string& name, int in_channels, int out_channels, int embed_dim)
        : cin_(in_channels), cout_(out_channels), embed_dim_(embed_dim),
          conv1_(name + ".conv1", in_channels, out_channels, 3),
          bn1_(name + ".bn1", out_channels),
          emb_proj_(name + ".emb_proj", embed_dim, out_channels),
          conv2_(name + ".conv2", out_channels, out_channels, 3),
          bn2_(name + ".bn2", out_channels),
          has_skip_conv_(in_channels != out_channels) {
        if (has_skip_conv_) skip_ = Conv2d<T>(name + ".skip", in_channels, out_channels, 1);
    }

    void init(std::mt19937_64& rng) {
        conv1_.init(rng);
        emb_proj_.init(rng);
        conv2_.init(rng);
        if (has_skip_conv_) skip_.init(rng);
    }

    void parameters(std::vector<Parameter<T>*>& out) {
        conv1_.parameters(out);
        bn1_.parameters(out);
        emb_proj_.parameters(out);
        conv2_.parameters(out);
        bn2_.parameters(out);
        if (has_skip_conv_) skip_.parameters(out);
    }

    void buffers(std::vector<Buffer<T>>& out) {
        bn1_.buffers(out);
        bn2_.buffers(out);
    }

    Conv2d<T>& conv1() { return conv1_; }
    Conv2d<T>& conv2() { return conv2_; }
    Linear<T>& emb_proj() { return emb_proj_; }

    /// x: {Cin, N, H, W}; emb: {N, E}.
    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& emb, Mode mode) {
        Tensor<T> h = act1_.forward(bn1_.forward(conv1_.forward(x, mode), mode), mode);
        Tensor<T> p = emb_proj_.forward(emb, mode);
        const int n = h.dim(1);
        const std::size_t plane = static_cast<std::size_t>(h.dim(2)) * h.dim(3);
        for (int c = 0; c < cout_; ++c) {
            for (int s = 0; s < n; ++s) {
                T* dst = h.ptr() + (static_cast<std::size_t>(c) * n + s) * plane;
                const T v = p[static_cast<std::size_t>(s) * cout_ + c];
                for (std::size_t k = 0; k < plane; ++k) dst[k] += v;
            }
        }
        Tensor<T> out = act2_.forward(bn2_.forward(conv2_.forward(h, mode), mode), mode);
        if (has_skip_conv_) add_inplace(out, skip_.forward(x, mode));
        else add_inplace(out, x);
        return out;
    }

    /// Returns d(loss)/dx and accumulates d(loss)/d(emb) into `demb`.
    Tensor<T> backward(const Tensor<T>& dout, Tensor<T>& demb) {
        Tensor<T> dh = conv2_.backward(bn2_.backward(act2_.backward(dout)));
        const int n = dh.dim(1);
        const std::size_t plane = static_cast<std::size_t>(dh.dim(2)) * dh.dim(3);
        Tensor<T> dp({n, cout_});
        for (int c = 0; c < cout_; ++c) {
            for (int s = 0; s < n; ++s) {
                const T* src = dh.ptr() + (static_cast<std::size_t>(c) * n + s) * plane;
                T acc = 0;
                for (std::size_t k = 0; k < plane; ++k) acc += src[k];
                dp[static_cast<std::size_t>(s) * cout_ + c] = acc;
            }
        }
        add_inplace(demb, emb_proj_.backward(dp));
        Tensor<T> dx = conv1_.backward(bn1_.backward(act1_.backward(dh)));
        if (has_skip_conv_) add_inplace(dx, skip_.backward(dout));
        else add_inplace(dx, dout);
        return dx;
    }

private:
    int cin_ = 0, cout_ = 0, embed_dim_ = 0;
    Conv2d<T> conv1_;
    BatchNorm2d<T> bn1_;
    Gelu<T> act1_;
    Linear<T> emb_proj_;
    Conv2d<T> conv2_;
    BatchNorm2d<T> bn2_;
    Gelu<T> act2_;
    bool has_skip_conv_ = false;
    Conv2d<T> skip_;
};

}  // namespace gms::nn
