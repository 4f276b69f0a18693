#include "dgan/graph.hpp"

#include <cmath>

#include "dgan/kernels.hpp"

namespace dgan {

namespace {

template <typename T, typename F>
TensorT<T> map1(const TensorT<T>& x, F f) {
    TensorT<T> out(x.shape());
    const T* a = x.data();
    T* o = out.data();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) o[i] = f(a[i]);
    return out;
}

template <typename T, typename F>
TensorT<T> map2(const TensorT<T>& x, const TensorT<T>& y, F f) {
    TensorT<T> out(x.shape());
    const T* a = x.data();
    const T* b = y.data();
    T* o = out.data();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) o[i] = f(a[i], b[i]);
    return out;
}

}  // namespace

template <typename T>
typename GraphT<T>::Id GraphT<T>::leaf(TensorT<T> v, bool param, bool grad) {
    v.require_finite("graph leaf");
    Node nd;
    nd.op = Op::kLeaf;
    nd.value = std::move(v);
    nd.grad_leaf = grad;
    nd.is_param = param;
    nodes_.push_back(std::move(nd));
    return Id(nodes_.size()) - 1;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::emit(Op op, Id in0, Id in1, Attrs attrs) {
    Node nd;
    nd.op = op;
    nd.in0 = in0;
    nd.in1 = in1;
    nd.attrs = attrs;
    nd.value = evaluate(nd);
    if (check_finite_) nd.value.require_finite("graph op output");
    nodes_.push_back(std::move(nd));
    return Id(nodes_.size()) - 1;
}

template <typename T>
T GraphT<T>::scalar_value(Id id) const {
    const TensorT<T>& v = nodes_[id].value;
    if (!v.shape().is_scalar()) throw DataError("node is not scalar");
    return v[0];
}

// ---------------------------------------------------------------------------
// builders (shape validation lives here; evaluate() trusts the shapes)
// ---------------------------------------------------------------------------

template <typename T>
typename GraphT<T>::Id GraphT<T>::conv2d(Id x, Id k, int stride, int pad) {
    const Shape4& xs = shape(x);
    const Shape4& ks = shape(k);
    if (stride < 1 || pad < 0) throw DataError("conv2d: bad stride/pad");
    if (xs.c != ks.c)
        throw DataError("conv2d: input channels " + std::to_string(xs.c) +
                        " != kernel channels " + std::to_string(ks.c));
    if (kernels::conv_out_dim(xs.h, ks.h, stride, pad) < 1 ||
        kernels::conv_out_dim(xs.w, ks.w, stride, pad) < 1)
        throw DataError("conv2d: non-positive output size for input " + xs.str());
    Attrs a;
    a.stride = stride;
    a.pad = pad;
    return emit(Op::kConv2d, x, k, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::conv2d_transpose(Id y, Id k, int stride, int pad, int out_h,
                                                   int out_w) {
    const Shape4& ys = shape(y);
    const Shape4& ks = shape(k);
    if (ys.c != ks.n)
        throw DataError("conv2d_transpose: input channels " + std::to_string(ys.c) +
                        " != kernel output channels " + std::to_string(ks.n));
    if (out_h < 1 || out_w < 1 ||
        kernels::conv_out_dim(out_h, ks.h, stride, pad) != ys.h ||
        kernels::conv_out_dim(out_w, ks.w, stride, pad) != ys.w)
        throw DataError("conv2d_transpose: output dims inconsistent with input dims");
    Attrs a;
    a.stride = stride;
    a.pad = pad;
    a.out_h = out_h;
    a.out_w = out_w;
    return emit(Op::kConvT2d, y, k, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::conv2d_kernel_grad(Id x, Id g, int stride, int pad, int kh,
                                                     int kw) {
    const Shape4& xs = shape(x);
    const Shape4& gs = shape(g);
    if (xs.n != gs.n) throw DataError("conv2d_kernel_grad: batch mismatch");
    if (kernels::conv_out_dim(xs.h, kh, stride, pad) != gs.h ||
        kernels::conv_out_dim(xs.w, kw, stride, pad) != gs.w)
        throw DataError("conv2d_kernel_grad: grad dims inconsistent");
    Attrs a;
    a.stride = stride;
    a.pad = pad;
    a.kh = kh;
    a.kw = kw;
    return emit(Op::kConvKGrad, x, g, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::relu(Id x) {
    return emit(Op::kRelu, x, -1, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::leaky_relu(Id x, double slope) {
    Attrs a;
    a.scale = slope;
    return emit(Op::kLeakyRelu, x, -1, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::tanh_(Id x) {
    return emit(Op::kTanh, x, -1, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::add(Id a, Id b) {
    if (!(shape(a) == shape(b))) throw DataError("add: shape mismatch");
    return emit(Op::kAdd, a, b, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::sub(Id a, Id b) {
    if (!(shape(a) == shape(b))) throw DataError("sub: shape mismatch");
    return emit(Op::kSub, a, b, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::mul(Id a, Id b) {
    if (!(shape(a) == shape(b))) throw DataError("mul: shape mismatch");
    return emit(Op::kMul, a, b, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::div(Id a, Id b) {
    if (!(shape(a) == shape(b))) throw DataError("div: shape mismatch");
    return emit(Op::kDiv, a, b, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::add_scalar(Id x, double v) {
    Attrs a;
    a.scale = v;
    return emit(Op::kAddScalar, x, -1, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::mul_scalar(Id x, double v) {
    Attrs a;
    a.scale = v;
    return emit(Op::kMulScalar, x, -1, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::sqrt_(Id x) {
    return emit(Op::kSqrt, x, -1, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::abs_(Id x) {
    return emit(Op::kAbs, x, -1, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::crop(Id x, int r0, int c0, int h, int w) {
    const Shape4& xs = shape(x);
    if (r0 < 0 || c0 < 0 || h < 1 || w < 1 || r0 + h > xs.h || c0 + w > xs.w)
        throw DataError("crop: window outside tensor");
    Attrs a;
    a.r0 = r0;
    a.c0 = c0;
    a.h = h;
    a.w = w;
    return emit(Op::kCrop, x, -1, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::concat_c(Id a, Id b) {
    const Shape4& as = shape(a);
    const Shape4& bs = shape(b);
    if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
        throw DataError("concat_c: shape mismatch");
    return emit(Op::kConcatC, a, b, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::slice_c(Id x, int from, int count) {
    const Shape4& xs = shape(x);
    if (from < 0 || count < 1 || from + count > xs.c) throw DataError("slice_c: range");
    Attrs a;
    a.from = from;
    a.count = count;
    return emit(Op::kSliceC, x, -1, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::transpose_mat(Id x) {
    if (shape(x).c != 1) throw DataError("transpose_mat: expects (N,1,A,B)");
    return emit(Op::kTransposeMat, x, -1, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::reduce_all(Id x, double scale) {
    Attrs a;
    a.scale = scale;
    return emit(Op::kReduceAll, x, -1, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::bcast_all(Id s, Shape4 sh, double scale) {
    if (!shape(s).is_scalar()) throw DataError("bcast_all: input not scalar");
    Attrs a;
    a.scale = scale;
    a.shape = sh;
    return emit(Op::kBcastAll, s, -1, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::chan_reduce(Id x, double scale) {
    Attrs a;
    a.scale = scale;
    return emit(Op::kChanReduce, x, -1, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::chan_bcast(Id x, int h, int w, double scale) {
    const Shape4& xs = shape(x);
    if (xs.h != 1 || xs.w != 1) throw DataError("chan_bcast: expects (N,C,1,1)");
    Attrs a;
    a.h = h;
    a.w = w;
    a.scale = scale;
    return emit(Op::kChanBcast, x, -1, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::batch_bcast(Id x, int n) {
    if (shape(x).n != 1) throw DataError("batch_bcast: input batch must be 1");
    Attrs a;
    a.n = n;
    return emit(Op::kBatchBcast, x, -1, a);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::batch_reduce(Id x) {
    return emit(Op::kBatchReduce, x, -1, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::maxpool2(Id x) {
    const Shape4& xs = shape(x);
    if (xs.h < 2 || xs.w < 2) throw DataError("maxpool2: input too small");
    return emit(Op::kMaxPool2, x, -1, {});
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::xcorr(Id a, Id b, double scale) {
    const Shape4& as = shape(a);
    const Shape4& bs = shape(b);
    if (as.n != bs.n || as.h != bs.h || as.w != bs.w) throw DataError("xcorr: shape mismatch");
    Attrs at;
    at.scale = scale;
    return emit(Op::kXCorr, a, b, at);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::chanmix(Id m, Id f, double scale) {
    const Shape4& ms = shape(m);
    const Shape4& fs = shape(f);
    if (ms.c != 1 || ms.w != fs.c || ms.n != fs.n) throw DataError("chanmix: shape mismatch");
    Attrs at;
    at.scale = scale;
    return emit(Op::kChanMix, m, f, at);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::instance_norm(Id x, double eps) {
    const Shape4& xs = shape(x);
    const double inv = 1.0 / (double(xs.h) * xs.w);
    Id mu = chan_bcast(chan_reduce(x, inv), xs.h, xs.w, 1.0);
    Id xc = sub(x, mu);
    Id var = chan_reduce(square(xc), inv);
    Id sd = chan_bcast(sqrt_(add_scalar(var, eps)), xs.h, xs.w, 1.0);
    return div(xc, sd);
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> GraphT<T>::evaluate(const Node& nd) const {
    auto in = [&](Id id) -> const TensorT<T>& { return nodes_[id].value; };
    const Attrs& at = nd.attrs;
    switch (nd.op) {
        case Op::kLeaf:
            return nd.value;
        case Op::kConv2d: {
            TensorT<T> out;
            kernels::conv2d(in(nd.in0), in(nd.in1), at.stride, at.pad, out);
            return out;
        }
        case Op::kConvT2d: {
            TensorT<T> out;
            kernels::conv2d_transpose(in(nd.in0), in(nd.in1), at.stride, at.pad, at.out_h,
                                      at.out_w, out);
            return out;
        }
        case Op::kConvKGrad: {
            TensorT<T> out;
            kernels::conv2d_kernel_grad(in(nd.in0), in(nd.in1), at.stride, at.pad, at.kh, at.kw,
                                        out);
            return out;
        }
        case Op::kRelu:
            return map1(in(nd.in0), [](T v) { return v > T(0) ? v : T(0); });
        case Op::kLeakyRelu: {
            const T s = T(at.scale);
            return map1(in(nd.in0), [s](T v) { return v > T(0) ? v : s * v; });
        }
        case Op::kTanh:
            return map1(in(nd.in0), [](T v) { return std::tanh(v); });
        case Op::kActGradRelu:
            return map2(in(nd.in0), in(nd.in1),
                        [](T g, T x) { return x > T(0) ? g : T(0); });
        case Op::kActGradLeaky: {
            const T s = T(at.scale);
            return map2(in(nd.in0), in(nd.in1),
                        [s](T g, T x) { return x > T(0) ? g : s * g; });
        }
        case Op::kAbs:
            return map1(in(nd.in0), [](T v) { return std::abs(v); });
        case Op::kSignMul:
            return map2(in(nd.in0), in(nd.in1), [](T g, T x) {
                return x > T(0) ? g : (x < T(0) ? -g : T(0));
            });
        case Op::kAdd:
            return map2(in(nd.in0), in(nd.in1), [](T a, T b) { return a + b; });
        case Op::kSub:
            return map2(in(nd.in0), in(nd.in1), [](T a, T b) { return a - b; });
        case Op::kMul:
            return map2(in(nd.in0), in(nd.in1), [](T a, T b) { return a * b; });
        case Op::kDiv:
            return map2(in(nd.in0), in(nd.in1), [](T a, T b) { return a / b; });
        case Op::kAddScalar: {
            const T s = T(at.scale);
            return map1(in(nd.in0), [s](T v) { return v + s; });
        }
        case Op::kMulScalar: {
            const T s = T(at.scale);
            return map1(in(nd.in0), [s](T v) { return v * s; });
        }
        case Op::kSqrt:
            return map1(in(nd.in0), [](T v) { return std::sqrt(v); });
        case Op::kCrop: {
            const TensorT<T>& x = in(nd.in0);
            const Shape4 s = x.shape();
            TensorT<T> out({s.n, s.c, at.h, at.w});
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < s.c; ++c)
                    for (int i = 0; i < at.h; ++i)
                        for (int j = 0; j < at.w; ++j)
                            out.at(n, c, i, j) = x.at(n, c, at.r0 + i, at.c0 + j);
            return out;
        }
        case Op::kPadInsert: {
            const TensorT<T>& x = in(nd.in0);
            const Shape4 s = x.shape();
            TensorT<T> out({s.n, s.c, at.out_h, at.out_w});
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < s.c; ++c)
                    for (int i = 0; i < s.h; ++i)
                        for (int j = 0; j < s.w; ++j)
                            out.at(n, c, at.r0 + i, at.c0 + j) = x.at(n, c, i, j);
            return out;
        }
        case Op::kConcatC: {
            const TensorT<T>& a = in(nd.in0);
            const TensorT<T>& b = in(nd.in1);
            const Shape4 as = a.shape(), bs = b.shape();
            TensorT<T> out({as.n, as.c + bs.c, as.h, as.w});
            const std::int64_t plane = std::int64_t(as.h) * as.w;
            for (int n = 0; n < as.n; ++n) {
                std::copy(a.data() + n * as.c * plane, a.data() + (n + 1) * as.c * plane,
                          out.data() + std::int64_t(n) * (as.c + bs.c) * plane);
                std::copy(b.data() + n * bs.c * plane, b.data() + (n + 1) * bs.c * plane,
                          out.data() + (std::int64_t(n) * (as.c + bs.c) + as.c) * plane);
            }
            return out;
        }
        case Op::kSliceC: {
            const TensorT<T>& x = in(nd.in0);
            const Shape4 s = x.shape();
            TensorT<T> out({s.n, at.count, s.h, s.w});
            const std::int64_t plane = std::int64_t(s.h) * s.w;
            for (int n = 0; n < s.n; ++n)
                std::copy(x.data() + (std::int64_t(n) * s.c + at.from) * plane,
                          x.data() + (std::int64_t(n) * s.c + at.from + at.count) * plane,
                          out.data() + std::int64_t(n) * at.count * plane);
            return out;
        }
        case Op::kPadChan: {
            const TensorT<T>& x = in(nd.in0);
            const Shape4 s = x.shape();
            TensorT<T> out({s.n, at.before + s.c + at.after, s.h, s.w});
            const std::int64_t plane = std::int64_t(s.h) * s.w;
            for (int n = 0; n < s.n; ++n)
                std::copy(x.data() + std::int64_t(n) * s.c * plane,
                          x.data() + std::int64_t(n + 1) * s.c * plane,
                          out.data() + (std::int64_t(n) * out.shape().c + at.before) * plane);
            return out;
        }
        case Op::kTransposeMat: {
            const TensorT<T>& x = in(nd.in0);
            const Shape4 s = x.shape();
            TensorT<T> out({s.n, 1, s.w, s.h});
            for (int n = 0; n < s.n; ++n)
                for (int i = 0; i < s.h; ++i)
                    for (int j = 0; j < s.w; ++j) out.at(n, 0, j, i) = x.at(n, 0, i, j);
            return out;
        }
        case Op::kReduceAll: {
            const TensorT<T>& x = in(nd.in0);
            double acc = 0.0;
            const std::int64_t n = x.size();
            for (std::int64_t i = 0; i < n; ++i) acc += double(x[i]);
            return TensorT<T>::scalar(T(acc * at.scale));
        }
        case Op::kBcastAll:
            return TensorT<T>::full(at.shape, T(double(in(nd.in0)[0]) * at.scale));
        case Op::kChanReduce: {
            const TensorT<T>& x = in(nd.in0);
            const Shape4 s = x.shape();
            TensorT<T> out({s.n, s.c, 1, 1});
            const std::int64_t plane = std::int64_t(s.h) * s.w;
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < s.c; ++c) {
                    const T* p = x.data() + (std::int64_t(n) * s.c + c) * plane;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < plane; ++i) acc += double(p[i]);
                    out.at(n, c, 0, 0) = T(acc * at.scale);
                }
            return out;
        }
        case Op::kChanBcast: {
            const TensorT<T>& x = in(nd.in0);
            const Shape4 s = x.shape();
            TensorT<T> out({s.n, s.c, at.h, at.w});
            const std::int64_t plane = std::int64_t(at.h) * at.w;
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < s.c; ++c) {
                    const T v = T(double(x.at(n, c, 0, 0)) * at.scale);
                    T* p = out.data() + (std::int64_t(n) * s.c + c) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) p[i] = v;
                }
            return out;
        }
        case Op::kBatchBcast: {
            const TensorT<T>& x = in(nd.in0);
            const Shape4 s = x.shape();
            TensorT<T> out({at.n, s.c, s.h, s.w});
            const std::int64_t block = x.size();
            for (int n = 0; n < at.n; ++n)
                std::copy(x.data(), x.data() + block, out.data() + n * block);
            return out;
        }
        case Op::kBatchReduce: {
            const TensorT<T>& x = in(nd.in0);
            const Shape4 s = x.shape();
            TensorT<T> out({1, s.c, s.h, s.w});
            const std::int64_t block = out.size();
            for (std::int64_t i = 0; i < block; ++i) {
                double acc = 0.0;
                for (int n = 0; n < s.n; ++n) acc += double(x[n * block + i]);
                out[i] = T(acc);
            }
            return out;
        }
        case Op::kMaxPool2: {
            TensorT<T> out;
            kernels::maxpool2(in(nd.in0), out);
            return out;
        }
        case Op::kMaxPoolGrad: {
            TensorT<T> out;
            kernels::maxpool2_backward(in(nd.in0), in(nd.in1), out);
            return out;
        }
        case Op::kXCorr: {
            TensorT<T> out;
            kernels::xcorr(in(nd.in0), in(nd.in1), at.scale, out);
            return out;
        }
        case Op::kChanMix: {
            TensorT<T> out;
            kernels::chanmix(in(nd.in0), in(nd.in1), at.scale, out);
            return out;
        }
    }
    throw DataError("unknown op");
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <typename T>
void GraphT<T>::accumulate(std::vector<Id>& adj, Id target, Id contribution) {
    adj[target] = adj[target] < 0 ? contribution : add(adj[target], contribution);
}

template <typename T>
void GraphT<T>::emit_vjps(Id id, Id g, std::vector<Id>& adj, const std::vector<char>& needed) {
    const Node& nd = nodes_[id];
    const Id x = nd.in0, y = nd.in1;
    const Attrs& at = nd.attrs;
    auto need = [&](Id i) { return i >= 0 && needed[i]; };
    switch (nd.op) {
        case Op::kLeaf:
            break;
        case Op::kConv2d: {
            const Shape4 xs = shape(x), ks = shape(y);
            if (need(x))
                accumulate(adj, x, conv2d_transpose(g, y, at.stride, at.pad, xs.h, xs.w));
            if (need(y))
                accumulate(adj, y, conv2d_kernel_grad(x, g, at.stride, at.pad, ks.h, ks.w));
            break;
        }
        case Op::kConvT2d: {
            const Shape4 ks = shape(y);
            if (need(x)) accumulate(adj, x, conv2d(g, y, at.stride, at.pad));
            if (need(y))
                accumulate(adj, y, conv2d_kernel_grad(g, x, at.stride, at.pad, ks.h, ks.w));
            break;
        }
        case Op::kConvKGrad: {
            // id computes dK(x, gconv); upstream g is kernel-shaped
            const Shape4 xs = shape(x);
            if (need(x))
                accumulate(adj, x, conv2d_transpose(y, g, at.stride, at.pad, xs.h, xs.w));
            if (need(y)) accumulate(adj, y, conv2d(x, g, at.stride, at.pad));
            break;
        }
        case Op::kRelu:
            if (need(x)) accumulate(adj, x, emit(Op::kActGradRelu, g, x, {}));
            break;
        case Op::kLeakyRelu:
            if (need(x)) {
                Attrs a;
                a.scale = at.scale;
                accumulate(adj, x, emit(Op::kActGradLeaky, g, x, a));
            }
            break;
        case Op::kTanh:
            if (need(x))
                accumulate(adj, x, mul(g, add_scalar(mul_scalar(square(id), -1.0), 1.0)));
            break;
        case Op::kActGradRelu:
            if (need(x)) accumulate(adj, x, emit(Op::kActGradRelu, g, y, {}));
            break;
        case Op::kActGradLeaky:
            if (need(x)) {
                Attrs a;
                a.scale = at.scale;
                accumulate(adj, x, emit(Op::kActGradLeaky, g, y, a));
            }
            break;
        case Op::kAbs:
            if (need(x)) accumulate(adj, x, emit(Op::kSignMul, g, x, {}));
            break;
        case Op::kSignMul:
            if (need(x)) accumulate(adj, x, emit(Op::kSignMul, g, y, {}));
            break;
        case Op::kAdd:
            if (need(x)) accumulate(adj, x, g);
            if (need(y)) accumulate(adj, y, g);
            break;
        case Op::kSub:
            if (need(x)) accumulate(adj, x, g);
            if (need(y)) accumulate(adj, y, mul_scalar(g, -1.0));
            break;
        case Op::kMul:
            if (need(x)) accumulate(adj, x, mul(g, y));
            if (need(y)) accumulate(adj, y, mul(g, x));
            break;
        case Op::kDiv:
            if (need(x)) accumulate(adj, x, div(g, y));
            if (need(y)) accumulate(adj, y, mul_scalar(mul(g, div(id, y)), -1.0));
            break;
        case Op::kAddScalar:
            if (need(x)) accumulate(adj, x, g);
            break;
        case Op::kMulScalar:
            if (need(x)) accumulate(adj, x, mul_scalar(g, at.scale));
            break;
        case Op::kSqrt:
            if (need(x)) accumulate(adj, x, div(g, mul_scalar(id, 2.0)));
            break;
        case Op::kCrop:
            if (need(x)) {
                const Shape4 xs = shape(x);
                Attrs a;
                a.r0 = at.r0;
                a.c0 = at.c0;
                a.out_h = xs.h;
                a.out_w = xs.w;
                accumulate(adj, x, emit(Op::kPadInsert, g, -1, a));
            }
            break;
        case Op::kPadInsert:
            if (need(x)) {
                const Shape4 xs = shape(x);
                accumulate(adj, x, crop(g, at.r0, at.c0, xs.h, xs.w));
            }
            break;
        case Op::kConcatC:
            if (need(x)) accumulate(adj, x, slice_c(g, 0, shape(x).c));
            if (need(y)) accumulate(adj, y, slice_c(g, shape(x).c, shape(y).c));
            break;
        case Op::kSliceC:
            if (need(x)) {
                const Shape4 xs = shape(x);
                Attrs a;
                a.before = at.from;
                a.after = xs.c - at.from - at.count;
                accumulate(adj, x, emit(Op::kPadChan, g, -1, a));
            }
            break;
        case Op::kPadChan:
            if (need(x)) accumulate(adj, x, slice_c(g, at.before, shape(x).c));
            break;
        case Op::kTransposeMat:
            if (need(x)) accumulate(adj, x, transpose_mat(g));
            break;
        case Op::kReduceAll:
            if (need(x)) accumulate(adj, x, bcast_all(g, shape(x), at.scale));
            break;
        case Op::kBcastAll:
            if (need(x)) accumulate(adj, x, reduce_all(g, at.scale));
            break;
        case Op::kChanReduce:
            if (need(x)) {
                const Shape4 xs = shape(x);
                accumulate(adj, x, chan_bcast(g, xs.h, xs.w, at.scale));
            }
            break;
        case Op::kChanBcast:
            if (need(x)) accumulate(adj, x, chan_reduce(g, at.scale));
            break;
        case Op::kBatchBcast:
            if (need(x)) accumulate(adj, x, batch_reduce(g));
            break;
        case Op::kBatchReduce:
            if (need(x)) accumulate(adj, x, batch_bcast(g, shape(x).n));
            break;
        case Op::kMaxPool2:
            if (need(x)) accumulate(adj, x, emit(Op::kMaxPoolGrad, g, x, {}));
            break;
        case Op::kMaxPoolGrad:
            if (need(x) || need(y))
                throw DataError("second-order gradient through max pooling is not supported");
            break;
        case Op::kXCorr:
            if (need(x)) accumulate(adj, x, chanmix(g, y, at.scale));
            if (need(y)) accumulate(adj, y, chanmix(transpose_mat(g), x, at.scale));
            break;
        case Op::kChanMix:
            if (need(x)) accumulate(adj, x, xcorr(g, y, at.scale));
            if (need(y)) accumulate(adj, y, chanmix(transpose_mat(x), g, at.scale));
            break;
    }
}

template <typename T>
std::vector<typename GraphT<T>::Id> GraphT<T>::backward(Id output, const std::vector<Id>& wrt) {
    if (!shape(output).is_scalar())
        throw DataError("backward: output must be scalar, got " + shape(output).str());
    const int n = int(nodes_.size());

    // A node needs an adjoint iff some wrt leaf flows into it and it flows
    // into the output.
    std::vector<char> from_wrt(n, 0);
    for (Id id : wrt) {
        if (id < 0 || id >= n) throw DataError("backward: bad wrt id");
        if (!nodes_[id].grad_leaf && nodes_[id].op == Op::kLeaf)
            throw DataError("backward: wrt leaf is a constant");
        from_wrt[id] = 1;
    }
    for (int id = 0; id < n; ++id) {
        if (from_wrt[id]) continue;
        const Node& nd = nodes_[id];
        if ((nd.in0 >= 0 && from_wrt[nd.in0]) || (nd.in1 >= 0 && from_wrt[nd.in1]))
            from_wrt[id] = 1;
    }
    std::vector<char> to_out(n, 0);
    to_out[output] = 1;
    for (int id = output; id >= 0; --id) {
        if (!to_out[id]) continue;
        const Node& nd = nodes_[id];
        if (nd.in0 >= 0) to_out[nd.in0] = 1;
        if (nd.in1 >= 0) to_out[nd.in1] = 1;
    }
    std::vector<char> needed(n, 0);
    for (int id = 0; id < n; ++id) needed[id] = from_wrt[id] && to_out[id];

    std::vector<Id> adj(n, -1);
    adj[output] = constant(TensorT<T>::scalar(T(1)));
    for (int id = output; id >= 0; --id) {
        if (adj[id] < 0 || !needed[id]) continue;
        emit_vjps(id, adj[id], adj, needed);
    }

    std::vector<Id> grads;
    grads.reserve(wrt.size());
    for (Id id : wrt)
        grads.push_back(adj[id] >= 0 ? adj[id] : constant(TensorT<T>(shape(id))));
    return grads;
}

template class GraphT<float>;
template class GraphT<double>;

}  // namespace dgan
