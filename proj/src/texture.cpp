#include "dgan/texture.hpp"

#include "dgan/kernels.hpp"

namespace dgan::texture {

namespace {

const Tensor4& single_image_layer(const FeatureStack& stack, int l) {
    const Tensor4& f = stack.layer(l);
    if (f.shape().n != 1)
        throw DataError("texture descriptors expect a single-image feature stack");
    return f;
}

double frob_sq_diff(const Tensor4& a, const Tensor4& b) {
    if (!(a.shape() == b.shape()))
        throw DataError("style loss: descriptor shape mismatch " + a.shape().str() + " vs " +
                        b.shape().str());
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc;
}

}  // namespace

Tensor4 gram(const FeatureStack& stack, int l) {
    const Tensor4& f = single_image_layer(stack, l);
    const Shape4 s = f.shape();
    Tensor4 out;
    kernels::xcorr(f, f, 1.0 / (double(s.h) * s.w), out);
    return out;
}

Tensor4 shift_crop(const Tensor4& maps, Axis axis, int delta, bool positive) {
    const Shape4 s = maps.shape();
    const int extent = (axis == Axis::kRow) ? s.h : s.w;
    if (delta < 0 || delta >= extent)
        throw DataError("shift_crop: delta " + std::to_string(delta) +
                        " outside extent " + std::to_string(extent));
    const int h = (axis == Axis::kRow) ? s.h - delta : s.h;
    const int w = (axis == Axis::kCol) ? s.w - delta : s.w;
    const int r0 = (axis == Axis::kRow && positive) ? delta : 0;
    const int c0 = (axis == Axis::kCol && positive) ? delta : 0;
    Tensor4 out({s.n, s.c, h, w});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    out.at(n, c, i, j) = maps.at(n, c, r0 + i, c0 + j);
    return out;
}

Tensor4 shifted_gram(const FeatureStack& stack, int l, Axis axis, int delta) {
    const Tensor4& f = single_image_layer(stack, l);
    const Shape4 s = f.shape();
    Tensor4 plus = shift_crop(f, axis, delta, true);
    Tensor4 minus = shift_crop(f, axis, delta, false);
    Tensor4 out;
    kernels::xcorr(plus, minus, 1.0 / (double(s.h) * s.w), out);
    return out;
}

std::vector<int> spatial_shifts(int l, int h, int w, bool* canonical) {
    if (l < 1 || l > 3)
        throw DataError("spatial_gram: layer " + std::to_string(l) + " unsupported");
    const int cap = std::min(h, w) / 2;
    std::vector<int> shifts;
    for (int d = 2; d <= cap; d *= 2) shifts.push_back(d);
    if (shifts.empty())
        throw DataError("spatial_gram: maps too small for any shift");
    if (canonical) *canonical = !shifts.empty() && shifts.back() == (1 << (7 - l));
    return shifts;
}

SpatialGram spatial_gram(const FeatureStack& stack, int l) {
    const Tensor4& f = single_image_layer(stack, l);
    const Shape4 s = f.shape();
    SpatialGram sg;
    sg.layer = l;
    sg.shifts = spatial_shifts(l, s.h, s.w, &sg.canonical);
    for (Axis axis : {Axis::kRow, Axis::kCol}) {
        auto& row = sg.blocks[axis == Axis::kRow ? 0 : 1];
        for (int d : sg.shifts) row.push_back(shifted_gram(stack, l, axis, d));
    }
    return sg;
}

double style_loss_gram(const FeatureStack& a, const FeatureStack& b, const StyleWeights& w) {
    double loss = 0.0;
    for (int i = 0; i < 3; ++i) {
        const int l = kStyleLayers[i];
        loss += w.w[i] * frob_sq_diff(gram(a, l), gram(b, l));
    }
    return loss;
}

double style_loss_spatial(const FeatureStack& a, const FeatureStack& b,
                          const StyleWeights& w) {
    double loss = 0.0;
    for (int i = 0; i < 3; ++i) {
        const int l = kStyleLayers[i];
        SpatialGram sa = spatial_gram(a, l);
        SpatialGram sb = spatial_gram(b, l);
        if (sa.shifts != sb.shifts)
            throw DataError("style_loss_spatial: shift sets differ between stacks");
        double layer = 0.0;
        for (int axis = 0; axis < 2; ++axis)
            for (std::size_t k = 0; k < sa.shifts.size(); ++k)
                layer += frob_sq_diff(sa.blocks[axis][k], sb.blocks[axis][k]);
        loss += w.w[i] * layer;
    }
    return loss;
}

double content_loss(const FeatureStack& a, const FeatureStack& b) {
    return frob_sq_diff(a.layer(kContentLayer), b.layer(kContentLayer));
}

}  // namespace dgan::texture
