#include "dgan/models.hpp"

#include <nlohmann/json.hpp>

#include "dgan/rng.hpp"
#include "dgan/weights_io.hpp"

using json = nlohmann::json;

namespace dgan {

Tensor4& ParamSet::tensor(const std::string& name) {
    for (auto& [n, t] : entries)
        if (n == name) return t;
    throw DataError("param set: missing tensor '" + name + "'");
}

std::uint64_t ParamSet::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [n, t] : entries) {
        h ^= fnv1a(n.data(), n.size());
        h *= 0x100000001b3ull;
        h ^= t.checksum();
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

Tensor4 init_normal(Rng& rng, Shape4 shape, double stddev = 0.02) {
    Tensor4 t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = float(rng.normal(0.0, stddev));
    return t;
}

// Encoder channel schedule for base b: b,2b,4b,8b,8b,8b.
int enc_ch(int base, int stage) { return base * std::min(8, 1 << (stage - 1)); }

// Decoder output channels, stage 1..6: 8b,8b,4b,2b,b,1.
int dec_out_ch(int base, int stage) {
    static constexpr int mult[7] = {0, 8, 8, 4, 2, 1, 0};
    return stage == 6 ? 1 : base * mult[stage];
}

// Decoder input channels: bottleneck for stage 1, concat(dec, skip) after.
int dec_in_ch(int base, int stage) {
    if (stage == 1) return enc_ch(base, 6);
    return dec_out_ch(base, stage - 1) + enc_ch(base, 7 - stage);
}

Graph::Id add_bias(Graph& g, Graph::Id x, const BoundParams& p, int param_idx) {
    const Shape4 s = g.shape(x);
    return g.add(x, g.chan_bcast(g.batch_bcast(p.ids[param_idx], s.n), s.h, s.w, 1.0));
}

}  // namespace

GeneratorNet build_generator(std::uint64_t seed, int base_channels) {
    if (base_channels < 1) throw DataError("build_generator: base_channels must be >= 1");
    GeneratorNet net;
    net.base_channels = base_channels;
    net.seed = seed;
    Rng rng(Rng::derive(seed, "generator-init"));
    int in_ch = 1;
    for (int k = 1; k <= 6; ++k) {
        int out_ch = enc_ch(base_channels, k);
        net.params.add("enc" + std::to_string(k) + ".w",
                       init_normal(rng, {out_ch, in_ch, 4, 4}));
        if (k == 1)
            net.params.add("enc1.b", Tensor4({1, out_ch, 1, 1}));
        in_ch = out_ch;
    }
    for (int k = 1; k <= 6; ++k) {
        // Transposed-conv kernels are stored as (in, out, 4, 4): the adjoint
        // convention, matching conv2d_transpose.
        net.params.add("dec" + std::to_string(k) + ".w",
                       init_normal(rng, {dec_in_ch(base_channels, k),
                                         dec_out_ch(base_channels, k), 4, 4}));
        if (k == 6) net.params.add("dec6.b", Tensor4({1, 1, 1, 1}));
    }
    return net;
}

CriticNet build_critic(std::uint64_t seed, int base_channels) {
    if (base_channels < 1) throw DataError("build_critic: base_channels must be >= 1");
    CriticNet net;
    net.base_channels = base_channels;
    net.seed = seed;
    Rng rng(Rng::derive(seed, "critic-init"));
    const int b = base_channels;
    const int chans[6] = {2, b, 2 * b, 4 * b, 8 * b, 1};
    for (int k = 1; k <= 5; ++k) {
        net.params.add("c" + std::to_string(k) + ".w",
                       init_normal(rng, {chans[k], chans[k - 1], 4, 4}));
        net.params.add("c" + std::to_string(k) + ".b", Tensor4({1, chans[k], 1, 1}));
    }
    return net;
}

BoundParams bind_params(Graph& g, const ParamSet& params, bool trainable) {
    BoundParams bound;
    bound.ids.reserve(params.entries.size());
    for (const auto& [name, t] : params.entries)
        bound.ids.push_back(trainable ? g.param(t) : g.constant(t));
    return bound;
}

Graph::Id unet_forward(Graph& g, const GeneratorNet& net, const BoundParams& p, Graph::Id x01) {
    // Parameter order: enc1.w, enc1.b, enc2.w..enc6.w, dec1.w..dec6.w, dec6.b.
    int pi = 0;
    std::vector<Graph::Id> skips;
    Graph::Id x = x01;
    for (int k = 1; k <= 6; ++k) {
        x = g.conv2d(x, p.ids[pi++], 2, 1);
        if (k == 1)
            x = add_bias(g, x, p, pi++);
        else
            x = g.instance_norm(x);
        x = g.leaky_relu(x, 0.2);
        if (k < 6) skips.push_back(x);
    }
    for (int k = 1; k <= 6; ++k) {
        const Shape4 s = g.shape(x);
        x = g.conv2d_transpose(x, p.ids[pi++], 2, 1, 2 * s.h, 2 * s.w);
        if (k < 6) {
            x = g.relu(g.instance_norm(x));
            Graph::Id skip = skips[std::size_t(5 - k)];
            if (!net.skip_enabled[std::size_t(5 - k)])
                skip = g.constant(Tensor4(g.shape(skip)));
            x = g.concat_c(x, skip);
        } else {
            x = add_bias(g, x, p, pi++);
            x = g.tanh_(x);
        }
    }
    // (v+1)/2: tanh range mapped to [0,1] pixels.
    return g.add_scalar(g.mul_scalar(x, 0.5), 0.5);
}

Graph::Id critic_forward(Graph& g, const CriticNet& net, const BoundParams& p, Graph::Id x01,
                         Graph::Id cand01) {
    (void)net;
    Graph::Id x = g.concat_c(x01, cand01);
    int pi = 0;
    const int strides[5] = {2, 2, 2, 1, 1};
    for (int k = 0; k < 5; ++k) {
        x = g.conv2d(x, p.ids[pi++], strides[k], 1);
        x = add_bias(g, x, p, pi++);
        if (k < 4) x = g.leaky_relu(x, 0.2);
    }
    return x;
}

QuantImage generate(const GeneratorNet& net, const QuantImage& x) {
    if (x.width != 128 || x.height != 128)
        throw DataError("generate: expects a 128x128 patch");
    Graph g;
    BoundParams p = bind_params(g, net.params, /*trainable=*/false);
    Graph::Id out = unet_forward(g, net, p, g.constant(to_tensor01(x)));
    return from_tensor01(g.value(out));
}

double criticize(const CriticNet& net, const QuantImage& x, const QuantImage& candidate) {
    if (x.width != 128 || x.height != 128 || candidate.width != 128 || candidate.height != 128)
        throw DataError("criticize: expects 128x128 patches");
    Graph g;
    BoundParams p = bind_params(g, net.params, /*trainable=*/false);
    Graph::Id score = critic_forward(g, net, p, g.constant(to_tensor01(x)),
                                     g.constant(to_tensor01(candidate)));
    const Shape4 s = g.shape(score);
    return double(g.scalar_value(g.reduce_all(score, 1.0 / (double(s.h) * s.w))));
}

void save_generator(const std::string& path, const GeneratorNet& net,
                    const std::string& metadata_json) {
    WeightsContainer c;
    json meta = metadata_json.empty() ? json::object()
                                      : json::parse(metadata_json, nullptr, false);
    if (meta.is_discarded()) throw DataError("save_generator: metadata is not valid JSON");
    meta["kind"] = "generator";
    meta["base_channels"] = net.base_channels;
    meta["seed"] = net.seed;
    c.add_text("metadata", meta.dump());
    for (const auto& [name, t] : net.params.entries) c.add_tensor(name, t);
    save_weights(path, c);
}

GeneratorNet load_generator(const std::string& path, std::string* metadata_json) {
    WeightsContainer c = load_weights(path);
    json meta = json::parse(c.text("metadata"), nullptr, false);
    if (meta.is_discarded() || meta.value("kind", "") != "generator")
        throw DataError("load_generator: bad metadata in " + path);
    GeneratorNet net = build_generator(meta.value("seed", std::uint64_t(0)),
                                       meta.value("base_channels", 64));
    for (auto& [name, t] : net.params.entries) {
        Tensor4 loaded = c.tensor(name);
        if (!(loaded.shape() == t.shape()))
            throw DataError("load_generator: tensor '" + name + "' has shape " +
                            loaded.shape().str() + ", expected " + t.shape().str());
        t = std::move(loaded);
    }
    if (metadata_json) *metadata_json = meta.dump();
    return net;
}

}  // namespace dgan
