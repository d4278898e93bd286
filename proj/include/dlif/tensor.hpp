#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dlif {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

/// Handle to a value node on a Tape. Cheap to copy; the tape owns storage.
class DiffTensor {
public:
    DiffTensor() = default;

    const Shape& shape() const;
    std::int64_t size() const;
    bool requires_grad() const;
    std::span<const double> value() const;
    std::span<const double> grad() const;
    double item() const;  // scalar tensors only

    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    DiffTensor(Tape* t, int id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

/// Reverse-mode tape over dense n-d double arrays. Define-by-run: nodes are
/// recorded in topological order as ops execute, so parents always precede
/// children and replaying in reverse order propagates gradients.
/// Single-threaded; distinct tapes are independent.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    DiffTensor leaf(Shape shape, std::vector<double> data, bool requires_grad = false);
    DiffTensor constant(Shape shape, double fill);
    DiffTensor scalar(double v) { return constant({1}, v); }

    /// Propagate d(root)/d(node) into the .grad of every reachable
    /// requires_grad node, accumulating on top of existing grads.
    void backward(DiffTensor root);

    void zero_grad();
    std::size_t nodes() const { return nodes_.size(); }

    // --- recording API (used by the op implementations) ---

    struct BackwardCtx;
    using BackFn = std::function<void(Tape&, int self, BackwardCtx&)>;

    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;  // sized iff requires_grad
        bool requires_grad = false;
        std::vector<int> parents;
        BackFn backward;
    };

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    DiffTensor record(Shape shape, std::vector<double> value, std::vector<int> parents,
                      BackFn backward);

private:
    std::vector<Node> nodes_;
};

// elementwise with numpy-style broadcasting; gradients reduce over broadcast axes
DiffTensor add(DiffTensor a, DiffTensor b);
DiffTensor sub(DiffTensor a, DiffTensor b);
DiffTensor mul(DiffTensor a, DiffTensor b);
DiffTensor div(DiffTensor a, DiffTensor b);

DiffTensor matmul(DiffTensor a, DiffTensor b);  // 2-D only
DiffTensor transpose(DiffTensor a);             // 2-D only
DiffTensor reshape(DiffTensor a, Shape s);
DiffTensor concat0(std::span<const DiffTensor> parts);  // along axis 0
DiffTensor slice(DiffTensor a, int axis, std::int64_t start, std::int64_t len);

DiffTensor sum(DiffTensor a);  // full reduction -> [1]
DiffTensor sum_axis(DiffTensor a, int axis, bool keepdims);
DiffTensor mean(DiffTensor a);
DiffTensor mean_axis(DiffTensor a, int axis, bool keepdims);

DiffTensor exp(DiffTensor a);
DiffTensor log(DiffTensor a);
DiffTensor sqrt(DiffTensor a);
DiffTensor relu(DiffTensor a);     // relu'(0) = 0
DiffTensor sigmoid(DiffTensor a);  // overflow-safe branch form
DiffTensor gelu(DiffTensor a);     // tanh approximation
DiffTensor abs(DiffTensor a);      // abs'(0) = 0
DiffTensor softmax(DiffTensor a);  // last axis, max-subtracted

DiffTensor add_scalar(DiffTensor a, double c);
DiffTensor mul_scalar(DiffTensor a, double c);
inline DiffTensor neg(DiffTensor a) { return mul_scalar(a, -1.0); }

inline DiffTensor operator+(DiffTensor a, DiffTensor b) { return add(a, b); }
inline DiffTensor operator-(DiffTensor a, DiffTensor b) { return sub(a, b); }
inline DiffTensor operator*(DiffTensor a, DiffTensor b) { return mul(a, b); }
inline DiffTensor operator/(DiffTensor a, DiffTensor b) { return div(a, b); }

/// Max over coordinates of |analytic - central difference| / max(1, |central|)
/// for a scalar-valued graph built by `f` from one leaf initialized with x0.
double grad_check(const std::function<DiffTensor(Tape&, DiffTensor)>& f, const Shape& shape,
                  std::span<const double> x0, double eps);

}  // namespace dlif
