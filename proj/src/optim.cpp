#include "modnas/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace modnas {

TensorPtr ParamStore::create(const std::string& name, Shape4 shape) {
    if (entries_.count(name))
        throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    ParamEntry e;
    e.tensor = make_tensor(shape, 0.0f, /*requires_grad=*/true);
    e.m1.assign(e.tensor->values.size(), 0.0f);
    e.m2.assign(e.tensor->values.size(), 0.0f);
    auto t = e.tensor;
    entries_.emplace(name, std::move(e));
    return t;
}

TensorPtr ParamStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::out_of_range("ParamStore: no parameter '" + name + "'");
    return it->second.tensor;
}

ParamEntry& ParamStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::out_of_range("ParamStore: no parameter '" + name + "'");
    return it->second;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, e] : entries_)
        if (name.rfind(prefix, 0) == 0) out.push_back(name);
    return out;
}

void ParamStore::zero_grads() {
    for (auto& [name, e] : entries_) e.tensor->zero_grad();
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [name, e] : entries_) n += e.tensor->numel();
    return n;
}

void adam_step(ParamStore& store, const std::string& name, float lr,
               const OptimizerConfig& cfg) {
    ParamEntry& e = store.entry(name);
    Tensor4D& t = *e.tensor;
    if (!t.has_grad())
        throw std::invalid_argument("adam_step: parameter '" + name + "' has no gradient");
    if (t.grad.size() != t.values.size())
        throw std::invalid_argument("adam_step: gradient shape mismatch for '" + name + "'");
    e.step += 1;
    const float bc1 = 1.0f - std::pow(cfg.beta1, static_cast<float>(e.step));
    const float bc2 = 1.0f - std::pow(cfg.beta2, static_cast<float>(e.step));
    for (size_t i = 0; i < t.values.size(); ++i) {
        const float g = t.grad[i];
        e.m1[i] = cfg.beta1 * e.m1[i] + (1.0f - cfg.beta1) * g;
        e.m2[i] = cfg.beta2 * e.m2[i] + (1.0f - cfg.beta2) * g * g;
        const float mhat = e.m1[i] / bc1;
        const float vhat = e.m2[i] / bc2;
        t.values[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

void adam_step_group(ParamStore& store, const std::string& prefix, float lr,
                     const OptimizerConfig& cfg) {
    for (const auto& name : store.names_with_prefix(prefix))
        if (store.get(name)->has_grad()) adam_step(store, name, lr, cfg);
}

float cosine_lr(int epoch, const OptimizerConfig& cfg) {
    if (epoch < 0 || epoch > cfg.total_epochs)
        throw std::out_of_range("cosine_lr: epoch " + std::to_string(epoch) +
                                " outside [0, " + std::to_string(cfg.total_epochs) + "]");
    const double t = static_cast<double>(epoch) / cfg.total_epochs;
    return static_cast<float>(cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) *
                                               (1.0 + std::cos(M_PI * t)));
}

namespace {

constexpr char kMagic[8] = {'M', 'N', 'A', 'S', 'C', 'K', 'P', '1'};

void append_payload(nlohmann::ordered_json& index, std::string& payload,
                    const std::string& name, const std::vector<int>& shape,
                    const float* data, size_t count) {
    nlohmann::ordered_json rec;
    rec["shape"] = shape;
    rec["dtype"] = "f32";
    rec["offset"] = payload.size();
    index[name] = rec;
    const size_t bytes = count * sizeof(float);
    size_t at = payload.size();
    payload.resize(at + bytes);
    std::memcpy(payload.data() + at, data, bytes);  // little-endian host assumed
}

}  // namespace

void checkpoint_save(const ParamStore& store, const std::string& path) {
    nlohmann::ordered_json index;
    std::string payload;
    for (const auto& [name, e] : store.entries()) {
        const Shape4& s = e.tensor->shape;
        std::vector<int> shape{s.n, s.c, s.h, s.w};
        append_payload(index, payload, name, shape, e.tensor->values.data(),
                       e.tensor->values.size());
        append_payload(index, payload, name + "#m1", shape, e.m1.data(), e.m1.size());
        append_payload(index, payload, name + "#m2", shape, e.m2.data(), e.m2.size());
        const float step = static_cast<float>(e.step);
        append_payload(index, payload, name + "#step", {1, 1, 1, 1}, &step, 1);
    }
    const std::string idx = index.dump();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint_save: cannot open '" + path + "'");
    f.write(kMagic, sizeof(kMagic));
    const uint64_t len = idx.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(idx.data(), static_cast<std::streamsize>(idx.size()));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw std::runtime_error("checkpoint_save: write failed for '" + path + "'");
}

void checkpoint_load(ParamStore& store, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint_load: cannot open '" + path + "'");
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint_load: bad magic in '" + path + "'");
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!f) throw std::runtime_error("checkpoint_load: truncated index length");
    std::string idx(len, '\0');
    f.read(idx.data(), static_cast<std::streamsize>(len));
    if (!f) throw std::runtime_error("checkpoint_load: truncated index");
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(idx);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("checkpoint_load: corrupt index: ") + e.what());
    }
    std::string payload((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    auto read_floats = [&](const nlohmann::json& rec, size_t count, float* dst) {
        const size_t off = rec.at("offset").get<size_t>();
        if (rec.at("dtype").get<std::string>() != "f32")
            throw std::runtime_error("checkpoint_load: unsupported dtype");
        if (off + count * sizeof(float) > payload.size())
            throw std::runtime_error("checkpoint_load: truncated payload");
        std::memcpy(dst, payload.data() + off, count * sizeof(float));
    };

    for (auto it = index.begin(); it != index.end(); ++it) {
        const std::string& name = it.key();
        if (name.find('#') != std::string::npos) continue;  // aux entries handled below
        auto shape = it.value().at("shape").get<std::vector<int>>();
        if (shape.size() != 4) throw std::runtime_error("checkpoint_load: bad shape for '" + name + "'");
        Shape4 s{shape[0], shape[1], shape[2], shape[3]};
        if (!store.contains(name)) store.create(name, s);
        ParamEntry& e = store.entry(name);
        if (e.tensor->shape != s)
            throw std::runtime_error("checkpoint_load: shape mismatch for '" + name + "': file " +
                                     s.str() + " vs store " + e.tensor->shape.str());
        const size_t count = e.tensor->values.size();
        read_floats(it.value(), count, e.tensor->values.data());
        if (index.contains(name + "#m1")) read_floats(index.at(name + "#m1"), count, e.m1.data());
        if (index.contains(name + "#m2")) read_floats(index.at(name + "#m2"), count, e.m2.data());
        if (index.contains(name + "#step")) {
            float step = 0.0f;
            read_floats(index.at(name + "#step"), 1, &step);
            e.step = static_cast<int64_t>(step);
        }
    }
}

}  // namespace modnas
