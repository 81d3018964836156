#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace modnas {

struct Shape4 {
    int n = 0, c = 0, h = 0, w = 0;

    int64_t numel() const {
        return static_cast<int64_t>(n) * c * h * w;
    }
    bool operator==(const Shape4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape4& o) const { return !(*this == o); }
    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

/// Dense rank-4 float tensor (batch, channels, height, width) with an
/// optional gradient buffer of the same shape. The universal carrier for
/// activations, weights and architecture parameters.
class Tensor4D {
public:
    Shape4 shape;
    std::vector<float> values;
    std::vector<float> grad;   // empty until ensure_grad()
    bool requires_grad = false;

    Tensor4D() = default;
    explicit Tensor4D(Shape4 s, float fill = 0.0f, bool rg = false)
        : shape(s), values(static_cast<size_t>(s.numel()), fill), requires_grad(rg) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            throw std::invalid_argument("Tensor4D: negative dimension " + s.str());
    }

    int64_t numel() const { return shape.numel(); }

    float& at(int n, int c, int h, int w) {
        return values[idx(n, c, h, w)];
    }
    float at(int n, int c, int h, int w) const {
        return values[idx(n, c, h, w)];
    }
    float& gat(int n, int c, int h, int w) {
        return grad[idx(n, c, h, w)];
    }

    size_t idx(int n, int c, int h, int w) const {
        return ((static_cast<size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w;
    }

    bool has_grad() const { return !grad.empty(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0f);
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0f);
    }
};

using TensorPtr = std::shared_ptr<Tensor4D>;

inline TensorPtr make_tensor(Shape4 s, float fill = 0.0f, bool requires_grad = false) {
    return std::make_shared<Tensor4D>(s, fill, requires_grad);
}

inline TensorPtr make_vector(const std::vector<float>& v, bool requires_grad = false) {
    auto t = make_tensor({1, static_cast<int>(v.size()), 1, 1}, 0.0f, requires_grad);
    t->values = v;
    return t;
}

inline TensorPtr make_scalar(float v, bool requires_grad = false) {
    auto t = make_tensor({1, 1, 1, 1}, v, requires_grad);
    return t;
}

/// Records the backward closures of one forward computation. Owned by a
/// single run; backward() may be called once.
class Tape {
public:
    void record(std::function<void()> fn) {
        ops_.push_back(std::move(fn));
    }
    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }

    /// Seeds grad(loss) = 1 and runs every recorded closure in reverse
    /// creation order, accumulating into the grad slots of all reachable
    /// tensors.
    void backward(const TensorPtr& loss) {
        if (consumed_)
            throw std::runtime_error("Tape::backward: tape already consumed");
        if (loss->numel() != 1)
            throw std::invalid_argument("Tape::backward: loss must be scalar, got " + loss->shape.str());
        consumed_ = true;
        loss->ensure_grad();
        loss->grad[0] = 1.0f;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

    void reset() {
        ops_.clear();
        consumed_ = false;
    }

    size_t size() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
    bool recording_ = true;
    bool consumed_ = false;
};

}  // namespace modnas
