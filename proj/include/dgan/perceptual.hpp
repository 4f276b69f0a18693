#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "dgan/graph.hpp"
#include "dgan/imaging.hpp"
#include "dgan/weights_io.hpp"

namespace dgan {

// Per-layer CNN feature maps of one image (or a batch).
struct FeatureStack {
    std::map<int, Tensor4> layers;  // layer index 1..5 -> (N, C_l, H_l, W_l)

    bool has(int l) const { return layers.count(l) != 0; }
    const Tensor4& layer(int l) const {
        auto it = layers.find(l);
        if (it == layers.end())
            throw DataError("feature stack: missing layer " + std::to_string(l));
        return it->second;
    }
};

// Content layer and style layers used by every loss. Layer 5 is computable
// for analysis but never enters a loss.
inline constexpr int kContentLayer = 4;
inline constexpr int kStyleLayers[3] = {1, 2, 3};

// Fixed-weight VGG-19-style extractor: five blocks of 3x3/stride-1/pad-1
// convolutions (2,2,4,4,4 per block; widths 64,128,256,512,512) with 2x2 max
// pooling between blocks. Taps are taken after the first ReLU of each block.
// Weights are immutable after load; training never touches them.
class FeatureNet {
  public:
    static constexpr int kNumBlocks = 5;
    static int block_convs(int block);     // 2,2,4,4,4
    static int block_width(int block);     // 64,128,256,512,512
    static int conv_count(int up_to_block);  // cumulative full-block inventory

    static FeatureNet load(const std::string& weights_path);
    static FeatureNet from_container(const WeightsContainer& c);

    // Tap shapes: for a 128x128 input, layer l is width(l) @ (128/2^(l-1))^2.
    FeatureStack extract(const QuantImage& img, const std::set<int>& layers) const;

    // Graph builder used by the training losses. img01 holds values in [0,1];
    // preprocessing (scale to [0,255], replicate to 3 channels, subtract the
    // per-channel offsets) happens inside. Returns tap ids for layers 1..max_layer.
    std::vector<Graph::Id> build_taps(Graph& g, Graph::Id img01, int max_layer) const;

    std::uint64_t weights_checksum() const;
    const std::array<float, 3>& input_offsets() const { return offsets_; }

  private:
    struct Conv {
        Tensor4 w;  // (out, in, 3, 3)
        Tensor4 b;  // (1, out, 1, 1)
    };
    std::vector<std::vector<Conv>> blocks_;
    std::array<float, 3> offsets_ = {0, 0, 0};
};

// Deterministic stand-in for pretrained weights: He-initialized 3x3 kernels,
// rescaled per layer so a white-noise probe keeps unit activation spread
// through the whole stack; offsets zero. Same seed -> bit-identical container.
WeightsContainer gen_fixture_weights(std::uint64_t seed);

struct LayerSimilarityRow {
    int layer = 0;   // 1..5, i.e. ReLU<l>_1
    double mse = 0;  // mean squared feature difference
    double ssim = 0; // per-map SSIM averaged over maps and pairs
};

// Per-layer MSE/SSIM comparison table between the input and target features
// of every pair, rows ReLU1_1..ReLU5_1.
std::vector<LayerSimilarityRow> layer_similarity(const PairSet& pairs, const FeatureNet& net);

}  // namespace dgan
