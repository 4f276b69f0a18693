#pragma once

#include <array>
#include <vector>

#include "dgan/graph.hpp"
#include "dgan/perceptual.hpp"

namespace dgan::texture {

enum class Axis { kRow, kCol };

// Per-layer style weights w_l (layers 1..3) and the global style weight.
struct StyleWeights {
    std::array<double, 3> w = {1.0, 1.0, 1.0};
    double lambda = 100.0;
};

// G_ij = (1/M) <F_i, F_j> over vectorized maps; symmetric PSD. (1,1,C,C).
Tensor4 gram(const FeatureStack& stack, int l);

// Crops of a map stack along one axis: positive keeps [delta, extent),
// negative keeps [0, extent - delta); the other axis is untouched.
Tensor4 shift_crop(const Tensor4& maps, Axis axis, int delta, bool positive);

// (1/M) <T_{+delta}(F_i), T_{-delta}(F_j)>; M is the full map size. Not
// symmetric in general; delta = 0 reproduces gram exactly.
Tensor4 shifted_gram(const FeatureStack& stack, int l, Axis axis, int delta);

// Power-of-two shifts {2,4,...} up to min(h,w)/2. For taps of a 128x128 input
// this is exactly {2,...,2^(7-l)}; anything else is flagged non-canonical.
std::vector<int> spatial_shifts(int l, int h, int w, bool* canonical = nullptr);

// 2 x |shifts| grid of shifted Gram blocks, rows {row, col}.
struct SpatialGram {
    int layer = 0;
    std::vector<int> shifts;
    bool canonical = true;
    std::array<std::vector<Tensor4>, 2> blocks;  // [axis][shift index]
};
SpatialGram spatial_gram(const FeatureStack& stack, int l);

// sum_l w_l ||G_hat^l - G^l||_F^2 over layers {1,2,3}.
double style_loss_gram(const FeatureStack& a, const FeatureStack& b, const StyleWeights& w);

// Same with the spatial block grids; the unshifted Gram is deliberately not
// added (small shifts already approximate it).
double style_loss_spatial(const FeatureStack& a, const FeatureStack& b, const StyleWeights& w);

// ||F^4(a) - F^4(b)||_F^2 on the content layer.
double content_loss(const FeatureStack& a, const FeatureStack& b);

// --- graph builders (shared by training losses and the pixel optimizer) ----

template <typename T>
typename GraphT<T>::Id gram_node(GraphT<T>& g, typename GraphT<T>::Id feats) {
    const Shape4 s = g.shape(feats);
    return g.xcorr(feats, feats, 1.0 / (double(s.h) * s.w));
}

template <typename T>
typename GraphT<T>::Id shifted_gram_node(GraphT<T>& g, typename GraphT<T>::Id feats, Axis axis,
                                         int delta) {
    const Shape4 s = g.shape(feats);
    const double inv_m = 1.0 / (double(s.h) * s.w);
    if (delta == 0) return g.xcorr(feats, feats, inv_m);
    typename GraphT<T>::Id plus, minus;
    if (axis == Axis::kRow) {
        plus = g.crop(feats, delta, 0, s.h - delta, s.w);
        minus = g.crop(feats, 0, 0, s.h - delta, s.w);
    } else {
        plus = g.crop(feats, 0, delta, s.h, s.w - delta);
        minus = g.crop(feats, 0, 0, s.h, s.w - delta);
    }
    return g.xcorr(plus, minus, inv_m);
}

// Row blocks for every shift, then col blocks, matching SpatialGram layout.
template <typename T>
std::vector<typename GraphT<T>::Id> spatial_gram_block_nodes(GraphT<T>& g,
                                                             typename GraphT<T>::Id feats,
                                                             const std::vector<int>& shifts) {
    std::vector<typename GraphT<T>::Id> blocks;
    for (Axis axis : {Axis::kRow, Axis::kCol})
        for (int d : shifts) blocks.push_back(shifted_gram_node(g, feats, axis, d));
    return blocks;
}

}  // namespace dgan::texture
