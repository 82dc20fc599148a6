// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_AUTODIFF_HPP
#define SPLATSEG_AUTODIFF_HPP

#include "splatseg/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace splatseg::ad {

/// Handle to a node in a Graph. Plain value type; only meaningful
/// together with the graph that produced it.
struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

enum class Reduction {
    Mean,
    Sum,
};

class Graph;

/// Extension point for operations whose forward/backward pair is written
/// by hand (sparse convolution, rasterizer blending, ...). The op object
/// may hold precomputed structure (index tables) but must be stateless
/// across calls: forward/backward can be invoked on any graph.
class CustomOp {
public:
    virtual ~CustomOp() = default;
    virtual const char* name() const = 0;
    virtual Tensor forward(const std::vector<const Tensor*>& inputs) = 0;
    /// Accumulates into inputGrads[i] (already allocated, zero on first
    /// touch). Entries are null for inputs that do not need gradients.
    virtual void backward(const Tensor& gradOut,
        const std::vector<const Tensor*>& inputs,
        const Tensor& output,
        const std::vector<Tensor*>& inputGrads) = 0;
};

/// Define-by-run reverse-mode tape. Forward values are computed eagerly
/// as ops are recorded; backward() walks the tape once in reverse
/// insertion order. A graph is single-use: after backward() the graph is
/// consumed and recording or differentiating again raises GraphConsumed.
class Graph {
public:
    Graph();
    ~Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // leaves
    Value input(Tensor t);
    Value constant(Tensor t);
    Value scalar(double v);

    // ops
    Value matmul(Value a, Value b);
    /// (n,m) x (m) -> (n)
    Value matvec(Value a, Value x);
    Value add(Value a, Value b);
    Value add_rowvec(Value a, Value b);
    Value mul(Value a, Value b);
    Value mul_scalar(Value a, double s);
    Value relu(Value a);
    Value concat(Value a, Value b, int axis);
    Value gather_rows(Value a, std::vector<int> indices);
    Value scatter_add_rows(Value a, std::vector<int> indices, int outRows);
    Value row_softmax(Value a);
    Value softmax_cross_entropy(Value logits, std::vector<int> targets, Reduction reduction);
    Value l2_normalize_rows(Value a);
    Value cosine_rows(Value a, Value b);
    Value mean(Value a);
    Value sum(Value a);
    Value custom(std::shared_ptr<CustomOp> op, std::vector<Value> inputs);

    /// Reverse pass from a scalar loss. Consumes the graph.
    void backward(Value loss);

    const Tensor& value(Value v) const;
    /// Gradient of the loss w.r.t. v. Valid after backward() for any
    /// node on the differentiated path; leaves created with
    /// requires_grad that ended up unused report zeros.
    const Tensor& grad(Value v) const;
    bool needs_grad(Value v) const;
    bool consumed() const { return mConsumed; }
    size_t size() const;

private:
    struct Node;
    int check(Value v) const;
    Node& node(int id);
    const Node& node(int id) const;
    Value newNode(Tensor value, std::vector<int> parents,
        std::function<void(Graph&, int)> back);

    std::vector<Node> mNodes;
    bool mConsumed = false;
    bool mBackwardDone = false;
};

// Row-partitioned dense kernels shared with the hand-written ops.
// C (n,m) += A (n,k) * B (k,m)
void matmul_accumulate(const double* a, const double* b, double* c, int n, int k, int m);

} // namespace splatseg::ad

#endif // SPLATSEG_AUTODIFF_HPP
