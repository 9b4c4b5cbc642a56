#include "gms/denoiser.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gms {

DenoiserModel::DenoiserModel(const Architecture& arch, std::uint64_t seed) : net_(arch) {
    net_.init(seed);
}

int DenoiserModel::label(std::optional<CapacityClass> c) const {
    if (!c) return null_label();
    if (c->index() >= architecture().class_count) {
        throw InvalidInput("capacity class " + std::to_string(c->value()) +
                           " outside the model's class table");
    }
    return c->index();
}

TensorF DenoiserModel::forward_estimate(const TensorF& z, std::span<const int> steps,
                                        std::span<const int> labels, Mode mode) {
    return net_.forward(z, steps, labels, mode);
}

TensorF DenoiserModel::forward_estimate(const TensorF& z, int step, std::optional<CapacityClass> c,
                                        Mode mode) {
    const int steps[] = {step};
    const int labels[] = {label(c)};
    TensorF in = z;
    const int g = architecture().grid;
    if (in.size() != static_cast<std::size_t>(g) * g) {
        throw InvalidInput("latent must hold " + std::to_string(g * g) + " values");
    }
    in.shape = {1, 1, g, g};
    TensorF out = net_.forward(in, steps, labels, mode);
    out.shape = z.shape;
    return out;
}

GradientTape DenoiserModel::backward(const TensorF& seed) {
    net_.backward(seed);
    GradientTape tape;
    for (auto* p : net_.parameters()) {
        tape.names.push_back(p->name);
        tape.grads.push_back(p->grad);
    }
    return tape;
}

std::vector<std::string> DenoiserModel::parameter_names() {
    std::vector<std::string> out;
    for (auto* p : net_.parameters()) out.push_back(p->name);
    return out;
}

std::size_t DenoiserModel::parameter_count() {
    std::size_t n = 0;
    for (auto* p : net_.parameters()) n += p->value.size();
    return n;
}

bool DenoiserModel::all_finite() {
    for (auto* p : net_.parameters()) {
        for (float v : p->value.data) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

LossAndSeed masked_squared_error(const TensorF& prediction, const TensorF& target,
                                 std::span<const float> mask) {
    if (prediction.shape != target.shape) throw InvalidInput("prediction/target shape mismatch");
    const std::size_t plane = mask.size();
    if (plane == 0 || prediction.size() % plane != 0) {
        throw InvalidInput("mask does not tile the prediction");
    }
    const std::size_t batch = prediction.size() / plane;
    double active = 0.0;
    for (float m : mask) active += m != 0.0f ? 1.0 : 0.0;
    const double count = active * static_cast<double>(batch);
    if (count == 0.0) throw InvalidInput("mask selects no cells");

    LossAndSeed out{0.0, TensorF(prediction.shape)};
    const float scale = static_cast<float>(2.0 / count);
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t k = 0; k < plane; ++k) {
            if (mask[k] == 0.0f) continue;
            const std::size_t i = n * plane + k;
            const double d = static_cast<double>(prediction[i]) - target[i];
            out.loss += d * d;
            out.seed[i] = scale * static_cast<float>(d);
        }
    }
    out.loss /= count;
    return out;
}

void apply_update(DenoiserModel& model, const GradientTape& tape, AdamState<float>& state,
                  double lr) {
    auto params = model.net().parameters();
    if (tape.names.size() != params.size()) {
        throw InvalidInput("gradient tape does not match the model's parameter table");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (tape.names[k] != params[k]->name) {
            throw InvalidInput("gradient tape entry " + tape.names[k] + " does not match parameter " +
                               params[k]->name);
        }
    }
    adam_step<float>(params, tape.grads, state, lr);
}

namespace {

constexpr char kMagic[4] = {'G', 'M', 'S', 'F'};

template <typename U>
void put(std::string& out, U value) {
    static_assert(std::is_trivially_copyable_v<U>);
    if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
        auto bytes = std::bit_cast<std::array<char, sizeof(U)>>(value);
        std::reverse(bytes.begin(), bytes.end());
        out.append(bytes.data(), bytes.size());
    } else {
        char bytes[sizeof(U)];
        std::memcpy(bytes, &value, sizeof(U));
        out.append(bytes, sizeof(U));
    }
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename U>
    U get(const std::string& section) {
        need(sizeof(U), section);
        U value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(U));
        if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
            auto b = std::bit_cast<std::array<char, sizeof(U)>>(value);
            std::reverse(b.begin(), b.end());
            value = std::bit_cast<U>(b);
        }
        pos_ += sizeof(U);
        return value;
    }

    std::string take(std::size_t n, const std::string& section) {
        need(n, section);
        std::string out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const std::string& section) const {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointError(section, "truncated (need " + std::to_string(n) + " bytes, have " +
                                               std::to_string(bytes_.size() - pos_) + ")");
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

void put_tensor(std::string& out, const std::string& name, const TensorF& t) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (float v : t.data) put<float>(out, v);
}

}  // namespace

std::string serialize_checkpoint(DenoiserModel& model, const nlohmann::json& metadata) {
    nlohmann::json meta = metadata;
    meta["architecture"] = model.architecture();
    meta["format_version"] = kCheckpointVersion;
    const std::string meta_text = meta.dump();

    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, meta_text.size());
    out += meta_text;

    auto params = model.net().parameters();
    auto buffers = model.net().buffers();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size() + buffers.size()));
    for (auto* p : params) put_tensor(out, p->name, p->value);
    for (auto& b : buffers) put_tensor(out, b.name, *b.tensor);
    return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    std::string magic = in.take(4, "magic");
    if (magic != std::string(kMagic, sizeof kMagic)) {
        throw CheckpointError("magic", "expected \"GMSF\"");
    }
    auto version = in.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("version", "unsupported format version " + std::to_string(version) +
                                             ", expected " + std::to_string(kCheckpointVersion));
    }
    auto meta_len = in.get<std::uint64_t>("metadata length");
    if (meta_len > in.remaining()) {
        throw CheckpointError("metadata", "truncated (length " + std::to_string(meta_len) +
                                              " exceeds remaining " + std::to_string(in.remaining()) +
                                              " bytes)");
    }
    std::string meta_text = in.take(static_cast<std::size_t>(meta_len), "metadata");
    nlohmann::json meta;
    Architecture arch;
    try {
        meta = nlohmann::json::parse(meta_text);
        arch = meta.at("architecture").get<Architecture>();
        arch.validate();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("metadata", e.what());
    } catch (const InvalidInput& e) {
        throw CheckpointError("metadata", e.what());
    }

    Checkpoint ckpt{DenoiserModel(arch), meta};
    auto params = ckpt.model.net().parameters();
    auto buffers = ckpt.model.net().buffers();
    std::vector<std::pair<std::string, TensorF*>> slots;
    for (auto* p : params) slots.emplace_back(p->name, &p->value);
    for (auto& b : buffers) slots.emplace_back(b.name, b.tensor);

    auto count = in.get<std::uint32_t>("tensor table");
    if (count != slots.size()) {
        throw CheckpointError("tensor table", "holds " + std::to_string(count) + " tensors, architecture needs " +
                                                  std::to_string(slots.size()));
    }
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::string where = "tensor " + std::to_string(k);
        auto name_len = in.get<std::uint32_t>(where + " name");
        std::string name = in.take(name_len, where + " name");
        const std::string section = where + " '" + name + "'";
        if (name != slots[k].first) {
            throw CheckpointError(section, "expected tensor '" + slots[k].first + "'");
        }
        auto dtype = in.get<std::uint8_t>(section + " dtype");
        if (dtype > 1) throw CheckpointError(section, "unknown dtype tag " + std::to_string(dtype));
        auto rank = in.get<std::uint32_t>(section + " rank");
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<int>(in.get<std::uint64_t>(section + " dims")));
        }
        TensorF& dst = *slots[k].second;
        if (shape != dst.shape) {
            throw CheckpointError(section, "shape " + nn::shape_string(shape) + " does not match " +
                                               nn::shape_string(dst.shape));
        }
        for (auto& v : dst.data) {
            v = dtype == 0 ? in.get<float>(section + " payload")
                           : static_cast<float>(in.get<double>(section + " payload"));
        }
    }
    if (in.remaining() != 0) {
        throw CheckpointError("trailer", std::to_string(in.remaining()) + " unexpected trailing bytes");
    }
    return ckpt;
}

void save_checkpoint(DenoiserModel& model, const nlohmann::json& metadata, const std::string& path) {
    std::string bytes = serialize_checkpoint(model, metadata);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing", path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint", path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str());
}

}  // namespace gms
