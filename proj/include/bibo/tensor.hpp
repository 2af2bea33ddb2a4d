#pragma once

// Dense row-major tensors and a tape-based reverse-mode autodiff engine.
//
// A Tape records every op in creation order, so creation order is already a
// topological order and backward() is a single reverse sweep. Vars are
// lightweight handles (tape pointer + node index) and are only valid while
// their tape is alive.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bibo/error.hpp"
#include "bibo/rng.hpp"

namespace bibo {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), values(shape_size(shape), fill) {}
    Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
        require(values.size() == shape_size(shape),
                "tensor value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    std::size_t size() const noexcept { return values.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    double item() const {
        require(values.size() == 1, "item() on non-scalar tensor " + shape_str(shape));
        return values[0];
    }

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

class Tape;

/// Handle to a node on a tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
    std::span<const double> grad() const;
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    struct Node {
        Tensor value;
        std::vector<double> grad;  // sized lazily on backward
        bool requires_grad = false;
        std::function<void(Tape&, std::size_t)> backward;
    };

    Var leaf(Tensor value, bool requires_grad = false) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad, nullptr});
        return Var(this, nodes_.size() - 1);
    }

    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Records an op result. `backward(tape, id)` must read grad(id) and
    /// accumulate into the inputs via accumulate().
    Var record(Tensor value, bool requires_grad, std::function<void(Tape&, std::size_t)> backward) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad, requires_grad ? std::move(backward) : nullptr});
        return Var(this, nodes_.size() - 1);
    }

    const Node& node(std::size_t id) const { return nodes_.at(id); }
    Node& node(std::size_t id) { return nodes_.at(id); }
    std::size_t size() const noexcept { return nodes_.size(); }

    std::vector<double>& grad_buffer(std::size_t id) {
        auto& n = nodes_[id];
        if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
        return n.grad;
    }

    /// Gradient of `id` (empty span when nothing flowed into it).
    std::span<const double> grad(std::size_t id) const { return nodes_.at(id).grad; }

    void backward(Var loss) {
        require(loss.valid() && &loss.tape() == this, "backward: loss belongs to another tape");
        auto& ln = nodes_.at(loss.id());
        require(ln.value.size() == 1,
                "backward requires a scalar loss, got shape " + shape_str(ln.value.shape));
        for (auto& n : nodes_) n.grad.clear();
        grad_buffer(loss.id())[0] = 1.0;
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (!n.backward || n.grad.empty()) continue;
            n.backward(*this, i);
        }
    }

private:
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->node(id_).value; }
inline std::span<const double> Var::grad() const { return tape_->grad(id_); }

} // namespace bibo
