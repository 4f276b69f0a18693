#pragma once

#include <vector>

#include "dgan/tensor.hpp"

namespace dgan {

// One differentiable expression DAG. Nodes are appended in topological order
// and evaluated eagerly; backward() appends the adjoint computation as ordinary
// nodes, so gradients are themselves differentiable (needed for the critic's
// gradient penalty, whose parameter update differentiates a gradient norm).
//
// A graph instance is not thread-safe; independent graphs on independent
// threads are fine.
template <typename T>
class GraphT {
  public:
    using Id = int;

    enum class Op {
        kLeaf,
        kConv2d, kConvT2d, kConvKGrad,
        kRelu, kLeakyRelu, kTanh, kActGradRelu, kActGradLeaky,
        kAbs, kSignMul,
        kAdd, kSub, kMul, kDiv, kAddScalar, kMulScalar, kSqrt,
        kCrop, kPadInsert, kConcatC, kSliceC, kPadChan, kTransposeMat,
        kReduceAll, kBcastAll, kChanReduce, kChanBcast, kBatchBcast, kBatchReduce,
        kMaxPool2, kMaxPoolGrad,
        kXCorr, kChanMix,
    };

    // Leaves. Inputs and params are the tensors backward() can differentiate
    // against; constants never receive gradients. Leaf values must be finite.
    Id input(TensorT<T> v) { return leaf(std::move(v), /*param=*/false, /*grad=*/true); }
    Id param(TensorT<T> v) { return leaf(std::move(v), /*param=*/true, /*grad=*/true); }
    Id constant(TensorT<T> v) { return leaf(std::move(v), /*param=*/false, /*grad=*/false); }
    Id scalar(T v) { return constant(TensorT<T>::scalar(v)); }

    // Convolution family. conv2d_transpose is the exact adjoint of conv2d for
    // the same kernel/stride/pad; out_h/out_w select the reconstructed size.
    Id conv2d(Id x, Id k, int stride, int pad);
    Id conv2d_transpose(Id y, Id k, int stride, int pad, int out_h, int out_w);
    Id conv2d_kernel_grad(Id x, Id g, int stride, int pad, int kh, int kw);

    Id relu(Id x);
    Id leaky_relu(Id x, double slope = 0.2);
    Id tanh_(Id x);

    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id div(Id a, Id b);
    Id add_scalar(Id x, double v);
    Id mul_scalar(Id x, double v);
    Id sqrt_(Id x);
    Id abs_(Id x);

    Id crop(Id x, int r0, int c0, int h, int w);
    Id concat_c(Id a, Id b);
    Id slice_c(Id x, int from, int count);
    Id transpose_mat(Id x);

    Id reduce_all(Id x, double scale);                    // -> scalar
    Id bcast_all(Id s, Shape4 shape, double scale);       // scalar -> shape
    Id chan_reduce(Id x, double scale);                   // -> (N,C,1,1)
    Id chan_bcast(Id x, int h, int w, double scale);      // (N,C,1,1) -> (N,C,h,w)
    Id batch_bcast(Id x, int n);                          // (1,..) -> (n,..)
    Id batch_reduce(Id x);                                // sum over batch -> (1,..)

    Id maxpool2(Id x);

    // Per-sample channel cross-Gram and its dual mixing op (see kernels.hpp).
    Id xcorr(Id a, Id b, double scale);
    Id chanmix(Id m, Id f, double scale);

    // Composites.
    Id square(Id x) { return mul(x, x); }
    Id sum_sq(Id x, double scale = 1.0) { return reduce_all(square(x), scale); }
    Id sum_sq_diff(Id a, Id b, double scale = 1.0) { return reduce_all(square(sub(a, b)), scale); }
    Id instance_norm(Id x, double eps = 1e-5);

    // Appends nodes computing d(output)/d(wrt[i]) and returns their ids.
    // output must be scalar; a wrt leaf disconnected from output yields zeros.
    std::vector<Id> backward(Id output, const std::vector<Id>& wrt);

    const TensorT<T>& value(Id id) const { return nodes_[id].value; }
    const Shape4& shape(Id id) const { return nodes_[id].value.shape(); }
    T scalar_value(Id id) const;
    std::size_t node_count() const { return nodes_.size(); }

    // When set, every op output is checked for NaN/Inf (slow; test use).
    void set_check_finite(bool on) { check_finite_ = on; }

  private:
    struct Attrs {
        int stride = 1, pad = 0;
        int out_h = 0, out_w = 0;
        int kh = 0, kw = 0;
        int r0 = 0, c0 = 0, h = 0, w = 0;
        int from = 0, count = 0;
        int before = 0, after = 0;
        int n = 0;
        double scale = 1.0;
        Shape4 shape;
    };
    struct Node {
        Op op = Op::kLeaf;
        Id in0 = -1, in1 = -1;
        Attrs attrs;
        TensorT<T> value;
        bool grad_leaf = false;
        bool is_param = false;
    };

    Id leaf(TensorT<T> v, bool param, bool grad);
    Id emit(Op op, Id in0, Id in1, Attrs attrs);
    TensorT<T> evaluate(const Node& nd) const;
    void accumulate(std::vector<Id>& adj, Id target, Id contribution);
    void emit_vjps(Id id, Id g, std::vector<Id>& adj, const std::vector<char>& needed);

    std::vector<Node> nodes_;
    bool check_finite_ = false;
};

using Graph = GraphT<float>;

}  // namespace dgan
