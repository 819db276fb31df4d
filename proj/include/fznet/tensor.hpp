#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fznet/errors.hpp"

namespace fznet {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& s);

class Tape;

// Lightweight handle into a Tape. The tape owns values and gradients; a
// Tensor is just (node id, shape). Copying is cheap.
struct Tensor {
    int node = -1;
    Shape shape;

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }
    std::size_t numel() const { return shape_numel(shape); }
};

// Define-by-run reverse-mode tape. Every operation appends a node holding the
// forward values plus a backward closure; backward() runs the closures in
// reverse creation order, which is a valid reverse topological order because
// an op can only consume already-created nodes.
class Tape {
  public:
    Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = false);
    Tensor constant(Shape shape, std::vector<double> values) {
        return leaf(std::move(shape), std::move(values), false);
    }
    Tensor scalar(double v) { return leaf({1}, {v}, false); }

    // -- primitives ---------------------------------------------------------
    Tensor matmul(Tensor a, Tensor b);        // [m,k] x [k,n] -> [m,n]
    Tensor matvec(Tensor w, Tensor x);        // [m,k] x [k]   -> [m]
    Tensor add(Tensor a, Tensor b);           // equal shapes, or b broadcast along last axis
    Tensor sub(Tensor a, Tensor b);
    Tensor mul(Tensor a, Tensor b);
    Tensor scale(Tensor a, double c);
    Tensor tanh(Tensor a);
    Tensor sigmoid(Tensor a);
    Tensor relu(Tensor a);
    Tensor softmax(Tensor x);                 // [n] -> [n], max-subtracted
    Tensor concat(const std::vector<Tensor>& parts, int axis);
    Tensor max_over_time(Tensor h);           // [T,d] -> [d], grad to first argmax
    Tensor row(Tensor h, int t);              // [T,d] -> [d]
    Tensor slice(Tensor x, int begin, int len);  // 1-D slice
    Tensor stack_rows(const std::vector<Tensor>& rows);  // T x [d] -> [T,d]
    Tensor reshape(Tensor x, Shape shape);
    Tensor div_scalar(Tensor a, Tensor s);    // a / s[0], s shape [1]
    Tensor sum(Tensor x);                     // -> [1]
    Tensor mean(Tensor x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

    // Mean squared error between a prediction vector and fixed targets.
    Tensor mse_loss(Tensor pred, const std::vector<double>& truth);

    void backward(Tensor loss);

    const std::vector<double>& values(Tensor t) const { return nodes_[static_cast<std::size_t>(t.node)].values; }
    double value0(Tensor t) const { return values(t)[0]; }
    // Valid after backward(); zero-filled for nodes the loss does not reach.
    const std::vector<double>& grad(Tensor t) const { return nodes_[static_cast<std::size_t>(t.node)].grad; }

    std::size_t size() const { return nodes_.size(); }
    // True when gradient flows to this node from some requires_grad leaf.
    bool needs(int node) const;

  private:
    struct Node {
        Shape shape;
        std::vector<double> values;
        std::function<void(Tape&)> backward;  // empty for leaves
        std::vector<double> grad;
    };

    std::vector<Node> nodes_;
    std::vector<char> needs_;

    int push(Shape shape, std::vector<double> values, std::function<void(Tape&)> bwd);
    std::vector<double>& grad_buf(int node);
    const std::vector<double>& vals(int node) const { return nodes_[static_cast<std::size_t>(node)].values; }
    Tensor make(Shape shape, std::vector<double> values, std::function<void(Tape&)> bwd,
                std::initializer_list<int> inputs);
    Tensor ewise_binary(Tensor a, Tensor b, int kind);
};

// Central finite differences against the tape gradient for a parametric
// scalar function. `f` must rebuild its graph from the given leaves each call.
// Returns max over parameters of |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
struct GradCheckParam {
    Shape shape;
    std::vector<double> values;
};

double grad_check(const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
                  std::vector<GradCheckParam> params, double eps = 1e-5);

}  // namespace fznet
