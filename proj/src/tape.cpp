#include "milr/tape.hpp"

#include <algorithm>
#include <cmath>

namespace milr {

namespace {

double stable_logsumexp_row(const Tensor2& x, std::size_t i) {
    double m = x(i, 0);
    for (std::size_t j = 1; j < x.cols; ++j) m = std::max(m, x(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) s += std::exp(x(i, j) - m);
    return m + std::log(s);
}

}  // namespace

NodeId Tape::push(Node node) {
    node.grad = Tensor2(node.value.rows, node.value.cols, 0.0);
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

NodeId Tape::input(Tensor2 value) {
    return push({Op::Input, std::move(value), {}, {}, {}, 0, 0});
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor2& A = val(a);
    const Tensor2& B = val(b);
    if (A.cols != B.rows) {
        throw ShapeError("matmul: inner dimensions differ, " + A.shape_str() +
                         " vs " + B.shape_str());
    }
    Tensor2 out(A.rows, B.cols, 0.0);
    for (std::size_t i = 0; i < A.rows; ++i) {
        for (std::size_t k = 0; k < A.cols; ++k) {
            const double aik = A(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < B.cols; ++j) {
                out(i, j) += aik * B(k, j);
            }
        }
    }
    return push({Op::MatMul, std::move(out), {}, {a, b}, {}, 0, 0});
}

NodeId Tape::add_rowvec(NodeId x, NodeId bias) {
    const Tensor2& X = val(x);
    const Tensor2& B = val(bias);
    if (B.rows != 1 || B.cols != X.cols) {
        throw ShapeError("add_rowvec: bias must be 1x" + std::to_string(X.cols) +
                         ", got " + B.shape_str());
    }
    Tensor2 out = X;
    for (std::size_t i = 0; i < X.rows; ++i) {
        for (std::size_t j = 0; j < X.cols; ++j) out(i, j) += B(0, j);
    }
    return push({Op::AddRowVec, std::move(out), {}, {x, bias}, {}, 0, 0});
}

NodeId Tape::transpose(NodeId x) {
    const Tensor2& X = val(x);
    Tensor2 out(X.cols, X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) {
        for (std::size_t j = 0; j < X.cols; ++j) out(j, i) = X(i, j);
    }
    return push({Op::Transpose, std::move(out), {}, {x}, {}, 0, 0});
}

NodeId Tape::rowwise_softmax(NodeId x) {
    const Tensor2& X = val(x);
    Tensor2 out(X.rows, X.cols);
    for (std::size_t i = 0; i < X.rows; ++i) {
        double m = X(i, 0);
        for (std::size_t j = 1; j < X.cols; ++j) m = std::max(m, X(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < X.cols; ++j) {
            out(i, j) = std::exp(X(i, j) - m);
            s += out(i, j);
        }
        for (std::size_t j = 0; j < X.cols; ++j) out(i, j) /= s;
    }
    return push({Op::RowSoftmax, std::move(out), {}, {x}, {}, 0, 0});
}

NodeId Tape::colwise_mean(NodeId x) {
    const Tensor2& X = val(x);
    if (X.rows == 0) throw EmptyBagError("colwise_mean: empty input");
    Tensor2 out(1, X.cols, 0.0);
    for (std::size_t i = 0; i < X.rows; ++i) {
        for (std::size_t j = 0; j < X.cols; ++j) out(0, j) += X(i, j);
    }
    for (std::size_t j = 0; j < X.cols; ++j) out(0, j) /= static_cast<double>(X.rows);
    return push({Op::ColMean, std::move(out), {}, {x}, {}, 0, 0});
}

NodeId Tape::colwise_max(NodeId x) {
    const Tensor2& X = val(x);
    if (X.rows == 0) throw EmptyBagError("colwise_max: empty input");
    Tensor2 out(1, X.cols);
    std::vector<std::size_t> arg(X.cols, 0);
    for (std::size_t j = 0; j < X.cols; ++j) {
        double best = X(0, j);
        std::size_t best_i = 0;
        for (std::size_t i = 1; i < X.rows; ++i) {
            if (X(i, j) > best) {
                best = X(i, j);
                best_i = i;
            }
        }
        out(0, j) = best;
        arg[j] = best_i;
    }
    return push({Op::ColMax, std::move(out), {}, {x}, std::move(arg), 0, 0});
}

NodeId Tape::colwise_sum(NodeId x) {
    const Tensor2& X = val(x);
    Tensor2 out(1, X.cols, 0.0);
    for (std::size_t i = 0; i < X.rows; ++i) {
        for (std::size_t j = 0; j < X.cols; ++j) out(0, j) += X(i, j);
    }
    return push({Op::ColSum, std::move(out), {}, {x}, {}, 0, 0});
}

NodeId Tape::tanh(NodeId x) {
    Tensor2 out = val(x);
    for (double& v : out.data) v = std::tanh(v);
    return push({Op::Tanh, std::move(out), {}, {x}, {}, 0, 0});
}

NodeId Tape::sigmoid(NodeId x) {
    Tensor2 out = val(x);
    for (double& v : out.data) {
        v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                     : std::exp(v) / (1.0 + std::exp(v));
    }
    return push({Op::Sigmoid, std::move(out), {}, {x}, {}, 0, 0});
}

NodeId Tape::relu(NodeId x) {
    Tensor2 out = val(x);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push({Op::Relu, std::move(out), {}, {x}, {}, 0, 0});
}

NodeId Tape::hadamard(NodeId x, NodeId y) {
    const Tensor2& X = val(x);
    const Tensor2& Y = val(y);
    require_same_shape(X, Y, "hadamard");
    Tensor2 out = X;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= Y.data[i];
    return push({Op::Hadamard, std::move(out), {}, {x, y}, {}, 0, 0});
}

NodeId Tape::scale_rows(NodeId x, NodeId s) {
    const Tensor2& X = val(x);
    const Tensor2& S = val(s);
    if (S.rows != X.rows || S.cols != 1) {
        throw ShapeError("scale_rows: scale must be " + std::to_string(X.rows) +
                         "x1, got " + S.shape_str());
    }
    Tensor2 out = X;
    for (std::size_t i = 0; i < X.rows; ++i) {
        for (std::size_t j = 0; j < X.cols; ++j) out(i, j) *= S(i, 0);
    }
    return push({Op::ScaleRows, std::move(out), {}, {x, s}, {}, 0, 0});
}

NodeId Tape::slice_cols(NodeId x, std::size_t begin, std::size_t width) {
    const Tensor2& X = val(x);
    if (begin + width > X.cols) {
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + width) + ") exceeds " + X.shape_str());
    }
    Tensor2 out(X.rows, width);
    for (std::size_t i = 0; i < X.rows; ++i) {
        for (std::size_t j = 0; j < width; ++j) out(i, j) = X(i, begin + j);
    }
    Node node{Op::SliceCols, std::move(out), {}, {x}, {}, 0, begin};
    return push(std::move(node));
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t rows = val(parts[0]).rows;
    std::size_t cols = 0;
    std::vector<std::size_t> offsets;
    offsets.reserve(parts.size());
    for (NodeId p : parts) {
        if (val(p).rows != rows) {
            throw ShapeError("concat_cols: row counts differ");
        }
        offsets.push_back(cols);
        cols += val(p).cols;
    }
    Tensor2 out(rows, cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor2& P = val(parts[k]);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < P.cols; ++j) out(i, offsets[k] + j) = P(i, j);
        }
    }
    return push({Op::ConcatCols, std::move(out), {}, parts, std::move(offsets), 0, 0});
}

NodeId Tape::rowwise_normalize(NodeId x) {
    const Tensor2& X = val(x);
    Tensor2 out = X;
    for (std::size_t i = 0; i < X.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < X.cols; ++j) s += X(i, j);
        for (std::size_t j = 0; j < X.cols; ++j) out(i, j) /= s;
    }
    return push({Op::RowNormalize, std::move(out), {}, {x}, {}, 0, 0});
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::size_t label) {
    const Tensor2& L = val(logits);
    if (L.rows != 1) throw ShapeError("softmax_cross_entropy: logits must be 1xC");
    if (label >= L.cols) {
        throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) +
                         " out of range for C=" + std::to_string(L.cols));
    }
    Tensor2 out(1, 1);
    out(0, 0) = stable_logsumexp_row(L, 0) - L(0, label);
    Node node{Op::SoftmaxCrossEntropy, std::move(out), {}, {logits}, {}, label, 0};
    return push(std::move(node));
}

NodeId Tape::nll_from_probs(NodeId probs, std::size_t label) {
    const Tensor2& P = val(probs);
    if (P.rows != 1) throw ShapeError("nll_from_probs: probs must be 1xC");
    if (label >= P.cols) {
        throw ShapeError("nll_from_probs: label " + std::to_string(label) +
                         " out of range for C=" + std::to_string(P.cols));
    }
    Tensor2 out(1, 1);
    // Clamp keeps the loss finite if a probability underflowed to 0.
    out(0, 0) = -std::log(std::max(P(0, label), 1e-300));
    Node node{Op::NllFromProbs, std::move(out), {}, {probs}, {}, label, 0};
    return push(std::move(node));
}

const std::vector<std::size_t>& Tape::argmax_rows(NodeId id) const {
    if (nodes_[id].op != Op::ColMax) {
        throw ShapeError("argmax_rows: node is not a colwise_max");
    }
    return nodes_[id].indices;
}

void Tape::backward(NodeId loss) {
    const Tensor2& L = val(loss);
    if (L.rows != 1 || L.cols != 1) {
        throw ShapeError("backward: loss must be scalar, got " + L.shape_str());
    }
    for (Node& n : nodes_) {
        std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }
    nodes_[loss].grad(0, 0) = 1.0;
    for (std::size_t i = loss + 1; i-- > 0;) {
        backward_node(i);
    }
}

void Tape::backward_node(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor2& G = n.grad;
    const Tensor2& Y = n.value;
    switch (n.op) {
        case Op::Input:
            break;
        case Op::MatMul: {
            const Tensor2& A = val(n.parents[0]);
            const Tensor2& B = val(n.parents[1]);
            Tensor2& GA = grd(n.parents[0]);
            Tensor2& GB = grd(n.parents[1]);
            for (std::size_t r = 0; r < A.rows; ++r) {
                for (std::size_t c = 0; c < B.cols; ++c) {
                    const double g = G(r, c);
                    if (g == 0.0) continue;
                    for (std::size_t k = 0; k < A.cols; ++k) {
                        GA(r, k) += g * B(k, c);
                        GB(k, c) += A(r, k) * g;
                    }
                }
            }
            break;
        }
        case Op::AddRowVec: {
            Tensor2& GX = grd(n.parents[0]);
            Tensor2& GB = grd(n.parents[1]);
            for (std::size_t r = 0; r < G.rows; ++r) {
                for (std::size_t c = 0; c < G.cols; ++c) {
                    GX(r, c) += G(r, c);
                    GB(0, c) += G(r, c);
                }
            }
            break;
        }
        case Op::Transpose: {
            Tensor2& GX = grd(n.parents[0]);
            for (std::size_t r = 0; r < G.rows; ++r) {
                for (std::size_t c = 0; c < G.cols; ++c) GX(c, r) += G(r, c);
            }
            break;
        }
        case Op::RowSoftmax: {
            Tensor2& GX = grd(n.parents[0]);
            for (std::size_t r = 0; r < Y.rows; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < Y.cols; ++c) dot += G(r, c) * Y(r, c);
                for (std::size_t c = 0; c < Y.cols; ++c) {
                    GX(r, c) += Y(r, c) * (G(r, c) - dot);
                }
            }
            break;
        }
        case Op::ColMean: {
            Tensor2& GX = grd(n.parents[0]);
            const double inv = 1.0 / static_cast<double>(GX.rows);
            for (std::size_t r = 0; r < GX.rows; ++r) {
                for (std::size_t c = 0; c < GX.cols; ++c) GX(r, c) += G(0, c) * inv;
            }
            break;
        }
        case Op::ColMax: {
            Tensor2& GX = grd(n.parents[0]);
            for (std::size_t c = 0; c < GX.cols; ++c) {
                GX(n.indices[c], c) += G(0, c);
            }
            break;
        }
        case Op::ColSum: {
            Tensor2& GX = grd(n.parents[0]);
            for (std::size_t r = 0; r < GX.rows; ++r) {
                for (std::size_t c = 0; c < GX.cols; ++c) GX(r, c) += G(0, c);
            }
            break;
        }
        case Op::Tanh: {
            Tensor2& GX = grd(n.parents[0]);
            for (std::size_t k = 0; k < G.data.size(); ++k) {
                GX.data[k] += G.data[k] * (1.0 - Y.data[k] * Y.data[k]);
            }
            break;
        }
        case Op::Sigmoid: {
            Tensor2& GX = grd(n.parents[0]);
            for (std::size_t k = 0; k < G.data.size(); ++k) {
                GX.data[k] += G.data[k] * Y.data[k] * (1.0 - Y.data[k]);
            }
            break;
        }
        case Op::Relu: {
            const Tensor2& X = val(n.parents[0]);
            Tensor2& GX = grd(n.parents[0]);
            for (std::size_t k = 0; k < G.data.size(); ++k) {
                if (X.data[k] > 0.0) GX.data[k] += G.data[k];
            }
            break;
        }
        case Op::Hadamard: {
            const Tensor2& X = val(n.parents[0]);
            const Tensor2& Yp = val(n.parents[1]);
            Tensor2& GX = grd(n.parents[0]);
            Tensor2& GY = grd(n.parents[1]);
            for (std::size_t k = 0; k < G.data.size(); ++k) {
                GX.data[k] += G.data[k] * Yp.data[k];
                GY.data[k] += G.data[k] * X.data[k];
            }
            break;
        }
        case Op::ScaleRows: {
            const Tensor2& X = val(n.parents[0]);
            const Tensor2& S = val(n.parents[1]);
            Tensor2& GX = grd(n.parents[0]);
            Tensor2& GS = grd(n.parents[1]);
            for (std::size_t r = 0; r < X.rows; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < X.cols; ++c) {
                    GX(r, c) += G(r, c) * S(r, 0);
                    acc += G(r, c) * X(r, c);
                }
                GS(r, 0) += acc;
            }
            break;
        }
        case Op::SliceCols: {
            Tensor2& GX = grd(n.parents[0]);
            for (std::size_t r = 0; r < G.rows; ++r) {
                for (std::size_t c = 0; c < G.cols; ++c) {
                    GX(r, n.slice_begin + c) += G(r, c);
                }
            }
            break;
        }
        case Op::ConcatCols: {
            for (std::size_t k = 0; k < n.parents.size(); ++k) {
                Tensor2& GP = grd(n.parents[k]);
                const std::size_t off = n.indices[k];
                for (std::size_t r = 0; r < GP.rows; ++r) {
                    for (std::size_t c = 0; c < GP.cols; ++c) {
                        GP(r, c) += G(r, off + c);
                    }
                }
            }
            break;
        }
        case Op::RowNormalize: {
            const Tensor2& X = val(n.parents[0]);
            Tensor2& GX = grd(n.parents[0]);
            for (std::size_t r = 0; r < X.rows; ++r) {
                double s = 0.0;
                double dot = 0.0;
                for (std::size_t c = 0; c < X.cols; ++c) {
                    s += X(r, c);
                    dot += G(r, c) * Y(r, c);
                }
                for (std::size_t c = 0; c < X.cols; ++c) {
                    GX(r, c) += (G(r, c) - dot) / s;
                }
            }
            break;
        }
        case Op::SoftmaxCrossEntropy: {
            const Tensor2& L = val(n.parents[0]);
            Tensor2& GL = grd(n.parents[0]);
            const double g = G(0, 0);
            double m = L(0, 0);
            for (std::size_t c = 1; c < L.cols; ++c) m = std::max(m, L(0, c));
            double s = 0.0;
            for (std::size_t c = 0; c < L.cols; ++c) s += std::exp(L(0, c) - m);
            for (std::size_t c = 0; c < L.cols; ++c) {
                const double p = std::exp(L(0, c) - m) / s;
                GL(0, c) += g * (p - (c == n.label ? 1.0 : 0.0));
            }
            break;
        }
        case Op::NllFromProbs: {
            const Tensor2& P = val(n.parents[0]);
            Tensor2& GP = grd(n.parents[0]);
            GP(0, n.label) += -G(0, 0) / std::max(P(0, n.label), 1e-300);
            break;
        }
    }
}

std::vector<Tensor2> finite_diff_gradient(
    const std::function<double(const std::vector<Tensor2>&)>& f,
    std::vector<Tensor2> params, double eps) {
    if (!(eps > 0.0)) throw ShapeError("finite_diff_gradient: eps must be positive");
    std::vector<Tensor2> grads;
    grads.reserve(params.size());
    for (const Tensor2& p : params) grads.emplace_back(p.rows, p.cols, 0.0);
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t k = 0; k < params[t].data.size(); ++k) {
            const double saved = params[t].data[k];
            params[t].data[k] = saved + eps;
            const double fp = f(params);
            params[t].data[k] = saved - eps;
            const double fm = f(params);
            params[t].data[k] = saved;
            grads[t].data[k] = (fp - fm) / (2.0 * eps);
        }
    }
    return grads;
}

}  // namespace milr
