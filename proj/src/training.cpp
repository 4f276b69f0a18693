#include "dgan/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dgan/rng.hpp"

using json = nlohmann::json;

namespace dgan {

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::kDialectical: return "dialectical";
        case TrainMode::kTextureNet: return "texture_net";
        case TrainMode::kL1WganGp: return "l1_wgan_gp";
    }
    return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "dialectical") return TrainMode::kDialectical;
    if (s == "texture_net") return TrainMode::kTextureNet;
    if (s == "l1_wgan_gp") return TrainMode::kL1WganGp;
    throw DataError("unknown training mode '" + s + "'");
}

void TrainConfig::validate() const {
    if (!(lambda_gp > 0)) throw DataError("config: lambda_gp must be > 0");
    if (n_critic < 1) throw DataError("config: n_critic must be >= 1");
    if (batch_size < 1) throw DataError("config: batch_size must be >= 1");
    if (steps < 0) throw DataError("config: steps must be >= 0");
    if (!(lr > 0)) throw DataError("config: lr must be > 0");
    for (double w : style_weights)
        if (w < 0) throw DataError("config: style weights must be >= 0");
    if (lambda_style < 0) throw DataError("config: lambda_style must be >= 0");
}

std::string TrainConfig::to_json() const {
    json j = {{"lambda_style", lambda_style},
              {"lambda_gan", lambda_gan},
              {"lambda_gp", lambda_gp},
              {"lambda_l1", lambda_l1},
              {"style_weights", style_weights},
              {"n_critic", n_critic},
              {"lr", lr},
              {"beta1", beta1},
              {"beta2", beta2},
              {"steps", steps},
              {"batch_size", batch_size},
              {"seed", seed},
              {"mode", to_string(mode)},
              {"checkpoint_every", checkpoint_every},
              {"base_channels", base_channels}};
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw DataError("config: not valid JSON");
    TrainConfig c;
    c.lambda_style = j.value("lambda_style", c.lambda_style);
    c.lambda_gan = j.value("lambda_gan", c.lambda_gan);
    c.lambda_gp = j.value("lambda_gp", c.lambda_gp);
    c.lambda_l1 = j.value("lambda_l1", c.lambda_l1);
    if (j.contains("style_weights")) {
        auto v = j["style_weights"].get<std::vector<double>>();
        if (v.size() != 3) throw DataError("config: style_weights must have 3 entries");
        std::copy(v.begin(), v.end(), c.style_weights.begin());
    }
    c.n_critic = j.value("n_critic", c.n_critic);
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mode")) c.mode = train_mode_from_string(j["mode"].get<std::string>());
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.validate();
    return c;
}

void write_loss_csv(const std::string& path, const TrainResult& result) {
    std::ofstream f(path);
    if (!f) throw DataError("write_loss_csv: cannot open " + path);
    f << "step,mode,content,style,adversarial,gp,total,wall_ms\n";
    char line[320];
    for (std::size_t i = 0; i < result.log.size(); ++i) {
        const LossBreakdown& r = result.log[i];
        double wall = i < result.wall_ms.size() ? result.wall_ms[i] : 0.0;
        std::snprintf(line, sizeof(line), "%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", r.step,
                      to_string(r.mode).c_str(), r.content, r.style, r.adversarial, r.gp,
                      r.total, wall);
        f << line;
    }
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, const ParamSet& params)
    : lr_(lr), beta1_(beta1), beta2_(beta2) {
    for (const auto& [name, t] : params.entries) {
        m_.emplace_back(t.shape());
        v_.emplace_back(t.shape());
    }
}

void Adam::step(ParamSet& params, const std::vector<Tensor4>& grads) {
    if (grads.size() != params.entries.size()) throw DataError("adam: grad count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        Tensor4& p = params.entries[i].second;
        const Tensor4& g = grads[i];
        if (!(g.shape() == p.shape())) throw DataError("adam: grad shape mismatch");
        Tensor4& m = m_[i];
        Tensor4& v = v_[i];
        for (std::int64_t k = 0; k < p.size(); ++k) {
            const double gk = double(g[k]);
            const double mk = beta1_ * double(m[k]) + (1.0 - beta1_) * gk;
            const double vk = beta2_ * double(v[k]) + (1.0 - beta2_) * gk * gk;
            m[k] = float(mk);
            v[k] = float(vk);
            p[k] = float(double(p[k]) - lr_ * (mk / bc1) / (std::sqrt(vk / bc2) + 1e-8));
        }
    }
}

// ---------------------------------------------------------------------------
// loss pieces
// ---------------------------------------------------------------------------

Tensor4 interpolate(const Tensor4& y, const Tensor4& g, double eps) {
    if (!(y.shape() == g.shape())) throw DataError("interpolate: shape mismatch");
    if (!(eps >= 0.0 && eps <= 1.0))
        throw DataError("interpolate: eps " + std::to_string(eps) + " outside [0,1]");
    Tensor4 out(y.shape());
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = float(eps * double(y[i]) + (1.0 - eps) * double(g[i]));
    return out;
}

Graph::Id gradient_penalty_node(Graph& g, Graph::Id xhat, Graph::Id score_per_sample_sum) {
    const Shape4 s = g.shape(xhat);
    if (s.c != 1) throw DataError("gradient_penalty: expects single-channel candidates");
    Graph::Id grad = g.backward(score_per_sample_sum, {xhat})[0];
    Graph::Id norm = g.sqrt_(g.chan_reduce(g.square(grad), 1.0));  // (N,1,1,1)
    Graph::Id pen = g.square(g.add_scalar(norm, -1.0));
    return g.reduce_all(pen, 1.0 / s.n);
}

namespace {

// Per-sample critic means: sum over the batch comes out unscaled, the batch
// mean gets 1/(N*S*S).
Graph::Id score_batch_mean(Graph& g, Graph::Id score_map) {
    const Shape4 s = g.shape(score_map);
    return g.reduce_all(score_map, 1.0 / (double(s.n) * s.h * s.w));
}
Graph::Id score_sample_sum(Graph& g, Graph::Id score_map) {
    const Shape4 s = g.shape(score_map);
    return g.reduce_all(score_map, 1.0 / (double(s.h) * s.w));
}

struct CriticGraph {
    Graph g;
    BoundParams bound;
    Graph::Id total = -1, d_fake = -1, d_real = -1, gp = -1;
};

void build_critic_loss(CriticGraph& cg, const CriticNet& critic, bool trainable,
                       const Tensor4& x01, const Tensor4& y01, const Tensor4& fake01,
                       const std::vector<double>& eps, double lambda_gp) {
    Graph& g = cg.g;
    const Shape4 s = x01.shape();
    if (int(eps.size()) != s.n) throw DataError("critic loss: eps count != batch size");
    cg.bound = bind_params(g, critic.params, trainable);
    Graph::Id x = g.constant(x01);
    Graph::Id y = g.constant(y01);
    Graph::Id fake = g.constant(fake01);

    Tensor4 eps_t({s.n, 1, 1, 1});
    for (int i = 0; i < s.n; ++i) {
        if (!(eps[i] >= 0.0 && eps[i] <= 1.0)) throw DataError("critic loss: eps outside [0,1]");
        eps_t[i] = float(eps[i]);
    }
    Graph::Id e = g.constant(eps_t);
    Graph::Id eb = g.chan_bcast(e, s.h, s.w, 1.0);
    Graph::Id one_minus = g.chan_bcast(g.add_scalar(g.mul_scalar(e, -1.0), 1.0), s.h, s.w, 1.0);
    Graph::Id xhat = g.add(g.mul(eb, y), g.mul(one_minus, fake));

    Graph::Id s_real = critic_forward(g, critic, cg.bound, x, y);
    Graph::Id s_fake = critic_forward(g, critic, cg.bound, x, fake);
    Graph::Id s_hat = critic_forward(g, critic, cg.bound, x, xhat);

    cg.d_real = score_batch_mean(g, s_real);
    cg.d_fake = score_batch_mean(g, s_fake);
    cg.gp = gradient_penalty_node(g, xhat, score_sample_sum(g, s_hat));
    cg.total = g.add(g.sub(cg.d_fake, cg.d_real), g.mul_scalar(cg.gp, lambda_gp));
}

std::vector<Tensor4> collect(const Graph& g, const std::vector<Graph::Id>& ids) {
    std::vector<Tensor4> out;
    out.reserve(ids.size());
    for (Graph::Id id : ids) out.push_back(g.value(id));
    return out;
}

CriticLossValue critic_update(CriticNet& critic, Adam& adam, const Tensor4& x01,
                              const Tensor4& y01, const Tensor4& fake01,
                              const std::vector<double>& eps, double lambda_gp) {
    CriticGraph cg;
    build_critic_loss(cg, critic, /*trainable=*/true, x01, y01, fake01, eps, lambda_gp);
    std::vector<Graph::Id> grads = cg.g.backward(cg.total, cg.bound.ids);
    CriticLossValue v{cg.g.scalar_value(cg.total), cg.g.scalar_value(cg.d_fake),
                      cg.g.scalar_value(cg.d_real), cg.g.scalar_value(cg.gp)};
    if (!std::isfinite(v.total)) throw NumericError("critic loss is not finite");
    adam.step(critic.params, collect(cg.g, grads));
    return v;
}

}  // namespace

CriticLossValue critic_loss(const CriticNet& critic, const Tensor4& x01, const Tensor4& y01,
                            const Tensor4& fake01, const std::vector<double>& eps,
                            double lambda_gp) {
    CriticGraph cg;
    build_critic_loss(cg, critic, /*trainable=*/false, x01, y01, fake01, eps, lambda_gp);
    return {cg.g.scalar_value(cg.total), cg.g.scalar_value(cg.d_fake),
            cg.g.scalar_value(cg.d_real), cg.g.scalar_value(cg.gp)};
}

double gradient_penalty(const CriticNet& critic, const Tensor4& x01, const Tensor4& xhat01) {
    Graph g;
    BoundParams bound = bind_params(g, critic.params, /*trainable=*/false);
    Graph::Id x = g.constant(x01);
    Graph::Id xhat = g.input(xhat01);
    Graph::Id smap = critic_forward(g, critic, bound, x, xhat);
    return double(g.scalar_value(gradient_penalty_node(g, xhat, score_sample_sum(g, smap))));
}

// ---------------------------------------------------------------------------
// target cache
// ---------------------------------------------------------------------------

TargetCache::TargetCache(const PairSet& pairs, const FeatureNet* fnet)
    : pairs_(pairs), fnet_(fnet) {
    const std::size_t n = pairs.pairs.size();
    x_.resize(n);
    y_.resize(n);
    content_.resize(n);
    style_.resize(n);
    have_features_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        x_[i] = to_tensor01(pairs.pairs[i].x);
        y_[i] = to_tensor01(pairs.pairs[i].y);
    }
    for (int l = 1; l <= 3; ++l)
        shifts_[l - 1] = texture::spatial_shifts(l, 128 >> (l - 1), 128 >> (l - 1));
}

const Tensor4& TargetCache::x01(int pair) const { return x_[pair]; }
const Tensor4& TargetCache::y01(int pair) const { return y_[pair]; }

void TargetCache::ensure_features(int pair) const {
    if (have_features_[pair]) return;
    if (!fnet_) throw DataError("target cache: feature net required for this mode");
    const PairSample& s = pairs_.pairs[pair];
    content_[pair] = fnet_->extract(s.x, {kContentLayer}).layer(kContentLayer);
    FeatureStack fy = fnet_->extract(s.y, {1, 2, 3});
    for (int l = 1; l <= 3; ++l) {
        std::vector<Tensor4> blocks;
        for (texture::Axis axis : {texture::Axis::kRow, texture::Axis::kCol})
            for (int d : shifts_[l - 1])
                blocks.push_back(texture::shifted_gram(fy, l, axis, d));
        style_[pair][l - 1] = std::move(blocks);
    }
    have_features_[pair] = 1;
}

const Tensor4& TargetCache::content_target(int pair) const {
    ensure_features(pair);
    return content_[pair];
}

const std::vector<Tensor4>& TargetCache::style_targets(int pair, int l) const {
    ensure_features(pair);
    return style_[pair][l - 1];
}

namespace {

Tensor4 stack_batch(const std::vector<const Tensor4*>& parts) {
    const Shape4 s = parts[0]->shape();
    Tensor4 out({int(parts.size()) * s.n, s.c, s.h, s.w});
    std::int64_t off = 0;
    for (const Tensor4* p : parts) {
        std::copy(p->data(), p->data() + p->size(), out.data() + off);
        off += p->size();
    }
    return out;
}

struct GenLossValue {
    double content = 0, style = 0, adversarial = 0, total = 0;
};

GenLossValue generator_update(GeneratorNet& gen, Adam& adam, const CriticNet* critic,
                              const FeatureNet* fnet, const TargetCache& cache,
                              const std::vector<int>& batch, const TrainConfig& cfg) {
    Graph g;
    BoundParams bg = bind_params(g, gen.params, /*trainable=*/true);

    std::vector<const Tensor4*> xs, ys;
    for (int i : batch) {
        xs.push_back(&cache.x01(i));
        ys.push_back(&cache.y01(i));
    }
    const int n = int(batch.size());
    Graph::Id x = g.constant(stack_batch(xs));
    Graph::Id fake = unet_forward(g, gen, bg, x);

    const bool adversarial = critic != nullptr;
    Graph::Id adv_mean = -1;
    if (adversarial) {
        BoundParams bd = bind_params(g, critic->params, /*trainable=*/false);
        adv_mean = score_batch_mean(g, critic_forward(g, *critic, bd, x, fake));
    }

    GenLossValue v;
    Graph::Id total;
    if (cfg.mode == TrainMode::kL1WganGp) {
        Graph::Id y = g.constant(stack_batch(ys));
        Graph::Id l1 = g.reduce_all(g.abs_(g.sub(fake, y)), 1.0 / double(g.shape(fake).n *
                                                                         g.shape(fake).h *
                                                                         double(g.shape(fake).w)));
        total = g.mul_scalar(l1, cfg.lambda_l1);
        if (adversarial) total = g.sub(total, g.mul_scalar(adv_mean, cfg.lambda_gan));
        v.content = g.scalar_value(l1);
    } else {
        std::vector<Graph::Id> taps = fnet->build_taps(g, fake, kContentLayer);
        std::vector<const Tensor4*> ct;
        for (int i : batch) ct.push_back(&cache.content_target(i));
        Graph::Id content = g.sum_sq_diff(taps[kContentLayer - 1], g.constant(stack_batch(ct)),
                                          1.0 / n);
        Graph::Id style = -1;
        for (int l = 1; l <= 3; ++l) {
            const auto& shifts = cache.shifts(l);
            std::vector<Graph::Id> blocks =
                texture::spatial_gram_block_nodes(g, taps[l - 1], shifts);
            Graph::Id layer_sum = -1;
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                std::vector<const Tensor4*> tb;
                for (int i : batch) tb.push_back(&cache.style_targets(i, l)[b]);
                Graph::Id d = g.sum_sq_diff(blocks[b], g.constant(stack_batch(tb)), 1.0 / n);
                layer_sum = layer_sum < 0 ? d : g.add(layer_sum, d);
            }
            Graph::Id weighted = g.mul_scalar(layer_sum, cfg.style_weights[l - 1]);
            style = style < 0 ? weighted : g.add(style, weighted);
        }
        total = g.add(content, g.mul_scalar(style, cfg.lambda_style));
        if (adversarial) total = g.sub(total, g.mul_scalar(adv_mean, cfg.lambda_gan));
        v.content = g.scalar_value(content);
        v.style = g.scalar_value(style);
    }
    if (adversarial) v.adversarial = g.scalar_value(adv_mean);
    v.total = g.scalar_value(total);
    if (!std::isfinite(v.total)) throw NumericError("generator loss is not finite");

    std::vector<Graph::Id> grads = g.backward(total, bg.ids);
    adam.step(gen.params, collect(g, grads));
    return v;
}

Tensor4 forward_value(const GeneratorNet& gen, const Tensor4& x01) {
    Graph g;
    BoundParams p = bind_params(g, gen.params, /*trainable=*/false);
    return g.value(unet_forward(g, gen, p, g.constant(x01)));
}

void save_checkpoint(const std::string& dir, const std::string& name,
                     const GeneratorNet& gen, const TrainConfig& cfg, int step) {
    std::filesystem::create_directories(dir);
    json meta = {{"step", step}, {"mode", to_string(cfg.mode)},
                 {"config", json::parse(cfg.to_json())}};
    save_generator((std::filesystem::path(dir) / name).string(), gen, meta.dump());
}

}  // namespace

// ---------------------------------------------------------------------------
// training loops
// ---------------------------------------------------------------------------

TrainResult train(const PairSet& pairs, const TrainConfig& cfg, const FeatureNet* fnet,
                  const std::string& ckpt_dir) {
    cfg.validate();
    if (pairs.pairs.empty()) throw DataError("train: empty pair set");
    for (const PairSample& s : pairs.pairs)
        if (s.x.width != 128 || s.x.height != 128 || s.y.width != 128 || s.y.height != 128)
            throw DataError("train: training patches must be 128x128");
    const bool feature_mode = cfg.mode != TrainMode::kL1WganGp;
    if (feature_mode && !fnet) throw DataError("train: feature net required for this mode");

    TrainResult res;
    res.generator = build_generator(Rng::derive(cfg.seed, "generator"), cfg.base_channels);
    res.critic = build_critic(Rng::derive(cfg.seed, "critic"), cfg.base_channels);
    Adam adam_g(cfg.lr, cfg.beta1, cfg.beta2, res.generator.params);
    Adam adam_d(cfg.lr, cfg.beta1, cfg.beta2, res.critic.params);
    Rng batch_rng(Rng::derive(cfg.seed, "batches"));
    Rng eps_rng(Rng::derive(cfg.seed, "interp"));
    TargetCache cache(pairs, feature_mode ? fnet : nullptr);

    // With a zero adversarial weight the critic cannot influence the
    // generator, so the critic phase is skipped outright; this makes the
    // degenerate configs coincide bit-for-bit with texture_net / plain L1.
    const bool use_critic = cfg.mode != TrainMode::kTextureNet && cfg.lambda_gan != 0.0;
    const int n_pairs = int(pairs.pairs.size());

    for (int step = 0; step < cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<int> batch(cfg.batch_size);
        for (int& b : batch) b = int(batch_rng.uniform_int(0, n_pairs - 1));

        double gp_val = 0.0;
        try {
            if (use_critic) {
                std::vector<const Tensor4*> xs, ys;
                for (int i : batch) {
                    xs.push_back(&cache.x01(i));
                    ys.push_back(&cache.y01(i));
                }
                Tensor4 x01 = stack_batch(xs);
                Tensor4 y01 = stack_batch(ys);
                Tensor4 fake01 = forward_value(res.generator, x01);
                for (int t = 0; t < cfg.n_critic; ++t) {
                    std::vector<double> eps(cfg.batch_size);
                    for (double& e : eps) e = eps_rng.uniform();
                    CriticLossValue cv = critic_update(res.critic, adam_d, x01, y01, fake01,
                                                       eps, cfg.lambda_gp);
                    gp_val = cv.gp;
                }
            }
            GenLossValue gv = generator_update(res.generator, adam_g,
                                               use_critic ? &res.critic : nullptr,
                                               feature_mode ? fnet : nullptr, cache, batch, cfg);
            res.log.push_back({step, cfg.mode, gv.content, gv.style, gv.adversarial, gp_val,
                               gv.total});
        } catch (const NumericError& e) {
            throw NumericError("training aborted at step " + std::to_string(step) + ": " +
                               e.what());
        }
        res.wall_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count());

        if (!ckpt_dir.empty() && cfg.checkpoint_every > 0 &&
            (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
            char name[48];
            std::snprintf(name, sizeof(name), "step_%06d.dgw", step + 1);
            save_checkpoint(ckpt_dir, name, res.generator, cfg, step + 1);
        }
    }
    if (!ckpt_dir.empty()) {
        save_checkpoint(ckpt_dir, "final.dgw", res.generator, cfg, cfg.steps);
        write_loss_csv((std::filesystem::path(ckpt_dir) / "loss.csv").string(), res);
    }
    return res;
}

CriticNet train_critic_only(const PairSet& pairs, const GeneratorNet& frozen,
                            const TrainConfig& cfg, int steps) {
    cfg.validate();
    if (pairs.pairs.empty()) throw DataError("train_critic_only: empty pair set");
    CriticNet critic = build_critic(Rng::derive(cfg.seed, "critic"), cfg.base_channels);
    Adam adam_d(cfg.lr, cfg.beta1, cfg.beta2, critic.params);
    Rng batch_rng(Rng::derive(cfg.seed, "critic-batches"));
    Rng eps_rng(Rng::derive(cfg.seed, "interp"));

    const int n_pairs = int(pairs.pairs.size());
    std::vector<Tensor4> x01(n_pairs), y01(n_pairs), fake01(n_pairs);
    for (int i = 0; i < n_pairs; ++i) {
        x01[i] = to_tensor01(pairs.pairs[i].x);
        y01[i] = to_tensor01(pairs.pairs[i].y);
        fake01[i] = forward_value(frozen, x01[i]);
    }
    for (int step = 0; step < steps; ++step) {
        std::vector<const Tensor4*> xs, ys, fs;
        for (int b = 0; b < cfg.batch_size; ++b) {
            int i = int(batch_rng.uniform_int(0, n_pairs - 1));
            xs.push_back(&x01[i]);
            ys.push_back(&y01[i]);
            fs.push_back(&fake01[i]);
        }
        std::vector<double> eps(cfg.batch_size);
        for (double& e : eps) e = eps_rng.uniform();
        critic_update(critic, adam_d, stack_batch(xs), stack_batch(ys), stack_batch(fs), eps,
                      cfg.lambda_gp);
    }
    return critic;
}

double mean_interpolate_grad_norm(const CriticNet& critic, const PairSet& pairs,
                                  const GeneratorNet& frozen, int n_probes,
                                  std::uint64_t seed) {
    if (pairs.pairs.empty() || n_probes < 1)
        throw DataError("mean_interpolate_grad_norm: need pairs and probes");
    Rng rng(Rng::derive(seed, "lipschitz-probe"));
    const int n_pairs = int(pairs.pairs.size());
    std::vector<Tensor4> fake01(n_pairs);
    double acc = 0.0;
    for (int k = 0; k < n_probes; ++k) {
        int i = int(rng.uniform_int(0, n_pairs - 1));
        Tensor4 x01 = to_tensor01(pairs.pairs[i].x);
        if (fake01[i].size() == 0) fake01[i] = forward_value(frozen, x01);
        Tensor4 xhat = interpolate(to_tensor01(pairs.pairs[i].y), fake01[i], rng.uniform());

        Graph g;
        BoundParams bound = bind_params(g, critic.params, /*trainable=*/false);
        Graph::Id xh = g.input(xhat);
        Graph::Id smap = critic_forward(g, critic, bound, g.constant(x01), xh);
        Graph::Id grad = g.backward(score_sample_sum(g, smap), {xh})[0];
        acc += std::sqrt(double(g.scalar_value(g.reduce_all(g.square(grad), 1.0))));
    }
    return acc / n_probes;
}

QuantImage gatys_optimize(const QuantImage& content, const QuantImage& style,
                          const FeatureNet& fnet, int iters, double step_size, bool spatial,
                          const texture::StyleWeights& weights,
                          std::vector<double>* loss_trace) {
    if (content.width != 128 || content.height != 128 || style.width != 128 ||
        style.height != 128)
        throw DataError("gatys_optimize: expects 128x128 patches");
    if (iters <= 0) return content;

    const Tensor4 content_target = fnet.extract(content, {kContentLayer}).layer(kContentLayer);
    FeatureStack fs = fnet.extract(style, {1, 2, 3});
    std::array<std::vector<Tensor4>, 3> style_targets;
    std::array<std::vector<int>, 3> shifts;
    for (int l = 1; l <= 3; ++l) {
        if (spatial) {
            shifts[l - 1] = texture::spatial_shifts(l, 128 >> (l - 1), 128 >> (l - 1));
            for (texture::Axis axis : {texture::Axis::kRow, texture::Axis::kCol})
                for (int d : shifts[l - 1])
                    style_targets[l - 1].push_back(texture::shifted_gram(fs, l, axis, d));
        } else {
            style_targets[l - 1].push_back(texture::gram(fs, l));
        }
    }

    Tensor4 pixels = to_tensor01(content);
    for (int it = 0; it < iters; ++it) {
        Graph g;
        Graph::Id px = g.input(pixels);
        std::vector<Graph::Id> taps = fnet.build_taps(g, px, kContentLayer);
        Graph::Id loss =
            g.sum_sq_diff(taps[kContentLayer - 1], g.constant(content_target), 1.0);
        Graph::Id style_node = -1;
        for (int l = 1; l <= 3; ++l) {
            std::vector<Graph::Id> blocks;
            if (spatial)
                blocks = texture::spatial_gram_block_nodes(g, taps[l - 1], shifts[l - 1]);
            else
                blocks.push_back(texture::gram_node(g, taps[l - 1]));
            Graph::Id layer_sum = -1;
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                Graph::Id d =
                    g.sum_sq_diff(blocks[b], g.constant(style_targets[l - 1][b]), 1.0);
                layer_sum = layer_sum < 0 ? d : g.add(layer_sum, d);
            }
            Graph::Id weighted = g.mul_scalar(layer_sum, weights.w[l - 1]);
            style_node = style_node < 0 ? weighted : g.add(style_node, weighted);
        }
        loss = g.add(loss, g.mul_scalar(style_node, weights.lambda));
        if (loss_trace) loss_trace->push_back(double(g.scalar_value(loss)));
        if (!std::isfinite(double(g.scalar_value(loss))))
            throw NumericError("gatys_optimize: loss is not finite at iteration " +
                               std::to_string(it));
        Graph::Id grad = g.backward(loss, {px})[0];
        const Tensor4& gt = g.value(grad);
        for (std::int64_t i = 0; i < pixels.size(); ++i) {
            double v = double(pixels[i]) - step_size * double(gt[i]);
            pixels[i] = float(std::clamp(v, 0.0, 1.0));
        }
    }
    return from_tensor01(pixels);
}

}  // namespace dgan
