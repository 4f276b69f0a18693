#include "dgan/perceptual.hpp"

#include <algorithm>
#include <cmath>

#include "dgan/kernels.hpp"
#include "dgan/rng.hpp"
#include "dgan/stats.hpp"

namespace dgan {

namespace {

constexpr int kBlockConvs[5] = {2, 2, 4, 4, 4};
constexpr int kBlockWidth[5] = {64, 128, 256, 512, 512};

std::string conv_name(int block, int idx) {
    return "conv" + std::to_string(block + 1) + "_" + std::to_string(idx + 1);
}

}  // namespace

int FeatureNet::block_convs(int block) { return kBlockConvs[block - 1]; }
int FeatureNet::block_width(int block) { return kBlockWidth[block - 1]; }

int FeatureNet::conv_count(int up_to_block) {
    int n = 0;
    for (int b = 1; b <= up_to_block; ++b) n += kBlockConvs[b - 1];
    return n;
}

FeatureNet FeatureNet::load(const std::string& weights_path) {
    return from_container(load_weights(weights_path));
}

FeatureNet FeatureNet::from_container(const WeightsContainer& c) {
    FeatureNet net;
    int in_ch = 3;
    for (int b = 0; b < kNumBlocks; ++b) {
        std::vector<Conv> convs;
        for (int i = 0; i < kBlockConvs[b]; ++i) {
            const std::string name = conv_name(b, i);
            Conv cv;
            cv.w = c.tensor(name);  // throws naming the tensor if missing
            const Shape4 ws = cv.w.shape();
            if (ws.n != kBlockWidth[b] || ws.c != in_ch || ws.h != 3 || ws.w != 3)
                throw DataError("feature net: tensor '" + name + "' has shape " + ws.str() +
                                ", expected (" + std::to_string(kBlockWidth[b]) + "," +
                                std::to_string(in_ch) + ",3,3)");
            if (const auto* rec = c.find(name + ".bias")) {
                if (rec->count() != kBlockWidth[b])
                    throw DataError("feature net: bad bias size for '" + name + "'");
                cv.b = Tensor4({1, kBlockWidth[b], 1, 1}, std::vector<float>(rec->data));
            } else {
                cv.b = Tensor4({1, kBlockWidth[b], 1, 1});
            }
            convs.push_back(std::move(cv));
            in_ch = kBlockWidth[b];
        }
        net.blocks_.push_back(std::move(convs));
    }
    const auto& off = c.require("input_offsets");
    if (off.count() != 3) throw DataError("feature net: input_offsets must have 3 entries");
    std::copy(off.data.begin(), off.data.end(), net.offsets_.begin());
    return net;
}

std::vector<Graph::Id> FeatureNet::build_taps(Graph& g, Graph::Id img01, int max_layer) const {
    if (max_layer < 1 || max_layer > kNumBlocks)
        throw DataError("feature net: layer out of range");
    const Shape4 in_shape = g.shape(img01);
    if (std::min(in_shape.h, in_shape.w) < (1 << (max_layer - 1)))
        throw DataError("feature net: image too small for requested depth");

    Graph::Id x = g.mul_scalar(img01, 255.0);
    x = g.concat_c(g.concat_c(x, x), x);
    Tensor4 off({1, 3, 1, 1});
    for (int c = 0; c < 3; ++c) off.at(0, c, 0, 0) = offsets_[c];
    Graph::Id offsets = g.batch_bcast(g.constant(off), in_shape.n);
    x = g.sub(x, g.chan_bcast(offsets, in_shape.h, in_shape.w, 1.0));

    std::vector<Graph::Id> taps;
    for (int b = 0; b < max_layer; ++b) {
        if (b > 0) x = g.maxpool2(x);
        // Only the convs actually on the path to the deepest tap are applied:
        // full blocks below, first conv of the tap block itself.
        const int n_convs = (b == max_layer - 1) ? 1 : kBlockConvs[b];
        for (int i = 0; i < n_convs; ++i) {
            const Conv& cv = blocks_[b][i];
            Graph::Id z = g.conv2d(x, g.constant(cv.w), 1, 1);
            const Shape4 zs = g.shape(z);
            Graph::Id bias = g.batch_bcast(g.constant(cv.b), zs.n);
            z = g.add(z, g.chan_bcast(bias, zs.h, zs.w, 1.0));
            x = g.relu(z);
            if (i == 0) taps.push_back(x);
        }
    }
    return taps;
}

FeatureStack FeatureNet::extract(const QuantImage& img, const std::set<int>& layers) const {
    if (layers.empty()) throw DataError("extract_features: empty layer set");
    const int max_layer = *layers.rbegin();
    Graph g;
    Graph::Id in = g.constant(to_tensor01(img));
    std::vector<Graph::Id> taps = build_taps(g, in, max_layer);
    FeatureStack stack;
    for (int l : layers) {
        if (l < 1 || l > kNumBlocks)
            throw DataError("extract_features: layer " + std::to_string(l) + " out of range");
        stack.layers[l] = g.value(taps[l - 1]);
    }
    return stack;
}

std::uint64_t FeatureNet::weights_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& block : blocks_)
        for (const auto& cv : block) {
            h ^= cv.w.checksum();
            h *= 0x100000001b3ull;
            h ^= cv.b.checksum();
            h *= 0x100000001b3ull;
        }
    return h;
}

WeightsContainer gen_fixture_weights(std::uint64_t seed) {
    Rng rng(Rng::derive(seed, "fixture-weights"));

    // White-noise probe for per-layer scale calibration.
    const int probe = 64;
    Rng probe_rng(Rng::derive(seed, "fixture-probe"));
    Tensor4 act({1, 3, probe, probe});
    for (std::int64_t i = 0; i < act.size(); ++i)
        act[i] = float(probe_rng.uniform_int(0, 255));

    WeightsContainer c;
    int in_ch = 3;
    for (int b = 0; b < FeatureNet::kNumBlocks; ++b) {
        const int width = kBlockWidth[b];
        if (b > 0) {
            Tensor4 pooled;
            kernels::maxpool2(act, pooled);
            act = std::move(pooled);
        }
        for (int i = 0; i < kBlockConvs[b]; ++i) {
            Tensor4 w({width, in_ch, 3, 3});
            const double he = std::sqrt(2.0 / (double(in_ch) * 9.0));
            for (std::int64_t k = 0; k < w.size(); ++k) w[k] = float(rng.normal(0.0, he));

            Tensor4 z;
            kernels::conv2d(act, w, 1, 1, z);
            for (std::int64_t k = 0; k < z.size(); ++k) z[k] = std::max(z[k], 0.0f);
            auto m = stats::moments(z.data(), z.size());
            const float inv_sd = float(1.0 / std::sqrt(std::max(m.var, 1e-12)));
            for (std::int64_t k = 0; k < w.size(); ++k) w[k] *= inv_sd;
            for (std::int64_t k = 0; k < z.size(); ++k) z[k] *= inv_sd;
            act = std::move(z);

            c.add(conv_name(b, i),
                  {std::uint32_t(width), std::uint32_t(in_ch), 3, 3},
                  std::vector<float>(w.data(), w.data() + w.size()));
            in_ch = width;
        }
    }
    c.add("input_offsets", {3}, {0.0f, 0.0f, 0.0f});
    return c;
}

std::vector<LayerSimilarityRow> layer_similarity(const PairSet& pairs, const FeatureNet& net) {
    if (pairs.pairs.empty()) throw DataError("layer_similarity: empty pair set");
    std::vector<LayerSimilarityRow> rows;
    for (int l = 1; l <= FeatureNet::kNumBlocks; ++l) rows.push_back({l, 0.0, 0.0});

    const std::set<int> all_layers = {1, 2, 3, 4, 5};
    for (const PairSample& s : pairs.pairs) {
        FeatureStack fx = net.extract(s.x, all_layers);
        FeatureStack fy = net.extract(s.y, all_layers);
        for (int l = 1; l <= FeatureNet::kNumBlocks; ++l) {
            const Tensor4& a = fx.layer(l);
            const Tensor4& b = fy.layer(l);
            const Shape4 sh = a.shape();
            const std::int64_t map = std::int64_t(sh.h) * sh.w;

            double se = 0.0;
            for (std::int64_t i = 0; i < a.size(); ++i) {
                double d = double(a[i]) - double(b[i]);
                se += d * d;
            }
            rows[l - 1].mse += se / (double(map) * sh.c);

            // Dynamic range for the SSIM constants is taken over the layer's
            // data for this pair (both stacks together).
            float lo = a[0], hi = a[0];
            for (std::int64_t i = 0; i < a.size(); ++i) {
                lo = std::min(lo, a[i]);
                hi = std::max(hi, a[i]);
            }
            for (std::int64_t i = 0; i < b.size(); ++i) {
                lo = std::min(lo, b[i]);
                hi = std::max(hi, b[i]);
            }
            const double range = (hi > lo) ? double(hi - lo) : 1.0;
            double ssim_sum = 0.0;
            for (int ch = 0; ch < sh.c; ++ch)
                ssim_sum += stats::ssim_global(a.data() + std::int64_t(ch) * map,
                                               b.data() + std::int64_t(ch) * map, map, range);
            rows[l - 1].ssim += ssim_sum / sh.c;
        }
    }
    const double inv = 1.0 / double(pairs.pairs.size());
    for (auto& r : rows) {
        r.mse *= inv;
        r.ssim *= inv;
    }
    return rows;
}

}  // namespace dgan
