#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace cfstereo {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
struct TensorData;

// One recorded operation: which tensors it consumed and the rule that maps
// the output gradient back onto them. The backward callback receives the
// node's own output so rules never have to capture it (that would create a
// reference cycle through TensorData::creator).
template <typename T>
struct OpNode {
    const char* name;
    std::vector<std::shared_ptr<TensorData<T>>> inputs;
    std::function<void(const TensorData<T>& out)> backward;
};

template <typename T>
struct TensorData {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until backward touches this tensor
    bool requires_grad = false;
    std::unique_ptr<OpNode<T>> creator;  // null for leaves

    std::vector<T>& grad_buffer() {
        if (grad.empty()) grad.assign(values.size(), T(0));
        return grad;
    }
};

// Per-thread switch: when false, ops run without recording OpNodes.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Value-semantics handle to a dense row-major tensor (last axis fastest).
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from_values(std::move(shape), {}, requires_grad, true);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (T& v : t.d_->values) v = value;
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
        if (numel(shape) != static_cast<int64_t>(values.size()))
            throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " needs " +
                                        std::to_string(numel(shape)) + " values, got " +
                                        std::to_string(values.size()));
        return from_values(std::move(shape), std::move(values), requires_grad, false);
    }

    static Tensor scalar(T value) { return from({}, {value}); }

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    int rank() const { return static_cast<int>(d_->shape.size()); }
    int64_t dim(int i) const { return d_->shape.at(static_cast<size_t>(i)); }
    int64_t size() const { return static_cast<int64_t>(d_->values.size()); }

    const std::vector<T>& values() const { return d_->values; }
    T item() const {
        if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar, shape " + shape_str(shape()));
        return d_->values[0];
    }

    // Direct mutation is for leaves only (parameter init, optimizer updates,
    // running statistics). Graph outputs are never written through this.
    std::vector<T>& mutable_values() { return d_->values; }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool on) { d_->requires_grad = on; }

    bool has_grad() const { return !d_->grad.empty(); }
    const std::vector<T>& grad() const {
        if (d_->grad.empty()) throw std::runtime_error("Tensor::grad: no gradient recorded");
        return d_->grad;
    }
    void zero_grad() { d_->grad.clear(); }

    std::shared_ptr<TensorData<T>> data() const { return d_; }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(d_->values.size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(d_->values[i]);
        return Tensor<U>::from(d_->shape, std::move(out), d_->requires_grad);
    }

  private:
    static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad, bool zero_fill) {
        Tensor t;
        t.d_ = std::make_shared<TensorData<T>>();
        t.d_->shape = std::move(shape);
        if (zero_fill)
            t.d_->values.assign(static_cast<size_t>(numel(t.d_->shape)), T(0));
        else
            t.d_->values = std::move(values);
        t.d_->requires_grad = requires_grad;
        return t;
    }

    std::shared_ptr<TensorData<T>> d_;

    template <typename U>
    friend Tensor<U> make_op_output(const char* name, Shape shape, std::vector<U> values,
                                    std::vector<Tensor<U>> inputs,
                                    std::function<void(const TensorData<U>&)> backward_fn);
};

// Attach a recorded node to a freshly computed output. Recording is skipped
// when grads are disabled or no input wants them; the values pass through
// untouched either way.
template <typename T>
Tensor<T> make_op_output(const char* name, Shape shape, std::vector<T> values,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(const TensorData<T>&)> backward_fn) {
    Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(values));
    bool wants_grad = false;
    if (grad_enabled())
        for (const auto& in : inputs)
            if (in.requires_grad()) { wants_grad = true; break; }
    if (wants_grad) {
        out.d_->requires_grad = true;
        auto node = std::make_unique<OpNode<T>>();
        node->name = name;
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs) node->inputs.push_back(in.data());
        node->backward = std::move(backward_fn);
        out.d_->creator = std::move(node);
    }
    return out;
}

// The tape recovered from a root: every recorded node reachable from it, in
// an order where a node's inputs always precede the node itself.
template <typename T>
std::vector<TensorData<T>*> collect_tape(const Tensor<T>& root) {
    std::vector<TensorData<T>*> order;
    std::unordered_set<TensorData<T>*> seen;
    // Iterative post-order DFS; graphs can be a few hundred nodes deep.
    struct Frame {
        TensorData<T>* t;
        size_t next_input;
    };
    std::vector<Frame> stack;
    if (root.data() && root.data()->creator) {
        stack.push_back({root.data().get(), 0});
        seen.insert(root.data().get());
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        OpNode<T>* node = f.t->creator.get();
        if (f.next_input < node->inputs.size()) {
            TensorData<T>* in = node->inputs[f.next_input++].get();
            if (in->creator && !seen.count(in)) {
                seen.insert(in);
                stack.push_back({in, 0});
            }
        } else {
            order.push_back(f.t);
            stack.pop_back();
        }
    }
    return order;
}

struct BackwardStats {
    size_t nodes_visited = 0;
    bool each_visited_once = true;
};

// Reverse sweep from a scalar loss: seeds d(loss)/d(loss)=1 and replays the
// tape once, accumulating into every requires_grad tensor along the way.
template <typename T>
BackwardStats backward(const Tensor<T>& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    auto tape = collect_tape(loss);
    loss.data()->grad_buffer()[0] = T(1);
    BackwardStats stats;
    std::unordered_map<TensorData<T>*, int> visits;
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        TensorData<T>* t = *it;
        if (t->grad.empty()) continue;  // nothing flowed into this subgraph
        t->creator->backward(*t);
        ++stats.nodes_visited;
        if (++visits[t] > 1) stats.each_visited_once = false;
    }
    return stats;
}

}  // namespace cfstereo
