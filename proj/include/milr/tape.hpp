#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "milr/tensor.hpp"

namespace milr {

using NodeId = std::size_t;

/// Reverse-mode differentiation over Tensor2 values.
///
/// Nodes are appended in construction order, which is therefore a valid
/// topological order; backward() walks it in reverse. Values are immutable
/// once recorded. Gradients are recomputed from scratch on every backward()
/// call, in a fixed iteration order, so repeated runs are bit-identical.
class Tape {
public:
    enum class Op : std::uint8_t {
        Input,
        MatMul,
        AddRowVec,
        Transpose,
        RowSoftmax,
        ColMean,
        ColMax,
        ColSum,
        Tanh,
        Sigmoid,
        Relu,
        Hadamard,
        ScaleRows,
        SliceCols,
        ConcatCols,
        RowNormalize,
        SoftmaxCrossEntropy,
        NllFromProbs,
    };

    NodeId input(Tensor2 value);

    /// a(m,k) * b(k,n) -> (m,n). Backward: dA = G*B^T, dB = A^T*G.
    NodeId matmul(NodeId a, NodeId b);

    /// x(m,n) + bias(1,n) broadcast over rows. The only broadcast allowed.
    NodeId add_rowvec(NodeId x, NodeId bias);

    NodeId transpose(NodeId x);

    /// Row-stable softmax: per-row max is subtracted before exponentiation.
    NodeId rowwise_softmax(NodeId x);

    NodeId colwise_mean(NodeId x);

    /// Per-column max with argmax row indices (ties -> lowest row index).
    /// Backward routes gradient only to the argmax entries.
    NodeId colwise_max(NodeId x);

    NodeId colwise_sum(NodeId x);

    NodeId tanh(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId relu(NodeId x);
    NodeId hadamard(NodeId x, NodeId y);

    /// Scales row i of x(m,n) by s(i,0); s must be (m,1).
    NodeId scale_rows(NodeId x, NodeId s);

    NodeId slice_cols(NodeId x, std::size_t begin, std::size_t width);
    NodeId concat_cols(const std::vector<NodeId>& parts);

    /// Divides each row by its row sum.
    NodeId rowwise_normalize(NodeId x);

    /// -log softmax(logits)[label] for logits of shape (1,C). Scalar result.
    NodeId softmax_cross_entropy(NodeId logits, std::size_t label);

    /// -log probs[label] for a (1,C) probability row. Scalar result.
    NodeId nll_from_probs(NodeId probs, std::size_t label);

    void backward(NodeId loss);

    const Tensor2& value(NodeId id) const { return nodes_[id].value; }
    const Tensor2& grad(NodeId id) const { return nodes_[id].grad; }
    /// Per-column argmax row indices of a ColMax node.
    const std::vector<std::size_t>& argmax_rows(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Op op;
        Tensor2 value;
        Tensor2 grad;
        std::vector<NodeId> parents;
        std::vector<std::size_t> indices;  // ColMax argmax; ConcatCols offsets
        std::size_t label = 0;             // CE / NLL class index
        std::size_t slice_begin = 0;
    };

    NodeId push(Node node);
    void backward_node(std::size_t i);
    const Tensor2& val(NodeId id) const { return nodes_[id].value; }
    Tensor2& grd(NodeId id) { return nodes_[id].grad; }

    std::vector<Node> nodes_;
};

/// Central finite differences (f(x+eps e) - f(x-eps e)) / 2eps, one coordinate
/// at a time. Used as the independent gradient oracle; only evaluates f.
std::vector<Tensor2> finite_diff_gradient(
    const std::function<double(const std::vector<Tensor2>&)>& f,
    std::vector<Tensor2> params, double eps);

}  // namespace milr
