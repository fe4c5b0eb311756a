#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "lcl/tensor.hpp"

namespace lcl {

// Reverse-mode autodiff over an explicit tape. Nodes are appended in
// execution order, which is a topological order, so walking the tape
// backward once visits each node after all of its consumers. Gradients
// from duplicated sub-expressions accumulate by summation.
class Tape {
 public:
    int leaf(Tensor value);

    int conv2d(int input, int kernel, int stride, int pad);
    int relu(int x);
    int maxpool2(int x);
    int global_avg_pool(int x);
    int affine(int x, int W, int b);
    int bias_add(int x, int b);  // x [C,H,W], b [C]
    int l2_normalize(int x);

    int add(int a, int b);
    int scale(int x, double c);
    int sum(int x);          // scalar
    int square_sum(int x);   // scalar, ||x||^2

    const Tensor& value(int id) const { return nodes_[id].value; }
    const Tensor& grad(int id) const { return nodes_[id].grad; }
    std::size_t num_nodes() const { return nodes_.size(); }

    // Backpropagate from a scalar loss node (grad seeded with 1).
    void backward(int loss_node);
    // Backpropagate from externally computed gradients at given nodes.
    void backward_seeded(const std::vector<std::pair<int, Tensor>>& seeds);

 private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, const Tensor&)> backprop;  // adds to parent grads
    };
    std::vector<Node> nodes_;

    int push(Tensor value, std::function<void(Tape&, const Tensor&)> backprop);
    void run_backward();
    Tensor& grad_mut(int id) { return nodes_[id].grad; }
};

}  // namespace lcl
