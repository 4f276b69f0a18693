#pragma once

#include <array>
#include <string>
#include <vector>

#include "dgan/graph.hpp"
#include "dgan/imaging.hpp"

namespace dgan {

// Named parameter tensors; the order is stable and shared with the optimizer,
// checkpoints and graph bindings.
struct ParamSet {
    std::vector<std::pair<std::string, Tensor4>> entries;

    void add(std::string name, Tensor4 t) { entries.emplace_back(std::move(name), std::move(t)); }
    Tensor4& tensor(const std::string& name);
    std::size_t size() const { return entries.size(); }
    std::uint64_t checksum() const;
};

// Graph ids of a bound ParamSet, aligned with its entry order.
struct BoundParams {
    std::vector<Graph::Id> ids;
};

// 6 stride-2 4x4 conv encoder stages + 6 stride-2 4x4 transposed-conv decoder
// stages with skip concatenation (encoder stage k feeds decoder stage 7-k).
// Leaky ReLU 0.2 down, ReLU up, tanh output mapped affinely to the pixel range.
// Instance norm everywhere except the first encoder and last decoder layers;
// only those two layers carry biases (a bias ahead of instance norm would be
// cancelled exactly and never receive gradient).
struct GeneratorNet {
    int base_channels = 64;
    std::uint64_t seed = 0;
    std::array<bool, 5> skip_enabled = {true, true, true, true, true};  // test ablations
    ParamSet params;
};

// PatchGAN critic: 4x4 convs, channels {b,2b,4b,8b} with strides {2,2,2,1},
// leaky ReLU 0.2, then a 4x4 stride-1 conv to one score channel. No
// normalization anywhere (batch statistics would couple samples and corrupt
// the per-sample gradient penalty); input is the 2-channel (condition,
// candidate) concatenation and the score map stays unbounded.
struct CriticNet {
    int base_channels = 64;
    std::uint64_t seed = 0;
    ParamSet params;
};

// Parameters initialized N(0, 0.02^2) under the seed; biases zero.
GeneratorNet build_generator(std::uint64_t seed, int base_channels = 64);
CriticNet build_critic(std::uint64_t seed, int base_channels = 64);

BoundParams bind_params(Graph& g, const ParamSet& params, bool trainable);

// Forward passes over pre-bound parameters; x01/cand01 hold values in [0,1].
// The generator output is the tanh mapped to [0,1]; the critic output is the
// raw (N,1,S,S) score map.
Graph::Id unet_forward(Graph& g, const GeneratorNet& net, const BoundParams& p, Graph::Id x01);
Graph::Id critic_forward(Graph& g, const CriticNet& net, const BoundParams& p, Graph::Id x01,
                         Graph::Id cand01);

// Deterministic inference on one 128x128 patch; output quantized by rounding.
QuantImage generate(const GeneratorNet& net, const QuantImage& x);

// Mean of the score map for a (condition, candidate) patch pair.
double criticize(const CriticNet& net, const QuantImage& x, const QuantImage& candidate);

// Checkpoints: DGW1 container with the parameter tensors plus a "metadata"
// JSON record (architecture config, seed, training step, mode).
void save_generator(const std::string& path, const GeneratorNet& net,
                    const std::string& metadata_json);
GeneratorNet load_generator(const std::string& path, std::string* metadata_json = nullptr);

}  // namespace dgan
