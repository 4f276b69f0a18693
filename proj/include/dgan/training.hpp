#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dgan/models.hpp"
#include "dgan/perceptual.hpp"
#include "dgan/texture.hpp"

namespace dgan {

enum class TrainMode { kDialectical, kTextureNet, kL1WganGp };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
    double lambda_style = 100.0;  // style weight in the generator objective
    double lambda_gan = 1.0;      // adversarial weight
    double lambda_gp = 10.0;      // gradient-penalty weight
    double lambda_l1 = 100.0;     // L1 weight (l1_wgan_gp mode)
    std::array<double, 3> style_weights = {1.0, 1.0, 1.0};  // w_l, layers 1..3
    int n_critic = 5;
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    int steps = 2000;
    int batch_size = 4;
    std::uint64_t seed = 1;
    TrainMode mode = TrainMode::kDialectical;
    int checkpoint_every = 0;  // 0: only the final checkpoint
    int base_channels = 64;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);

    texture::StyleWeights style() const {
        return {style_weights, lambda_style};
    }
};

// Per-step loss parts. `total` recombines them under the active mode:
//   dialectical: content + lambda_style*style - lambda_gan*adversarial
//   texture_net: content + lambda_style*style
//   l1_wgan_gp:  lambda_l1*content - lambda_gan*adversarial  (content = mean|y-G(x)|)
// `adversarial` is the raw E[D(G(x)|x)]; `gp` is the last critic update's
// penalty term (informational; not part of the generator total).
struct LossBreakdown {
    int step = 0;
    TrainMode mode = TrainMode::kDialectical;
    double content = 0, style = 0, adversarial = 0, gp = 0, total = 0;
};

struct TrainResult {
    GeneratorNet generator;
    CriticNet critic;
    std::vector<LossBreakdown> log;
    std::vector<double> wall_ms;  // parallel to log; excluded from determinism
};

// CSV schema: step,mode,content,style,adversarial,gp,total,wall_ms
void write_loss_csv(const std::string& path, const TrainResult& result);

// Adam with bias correction; beta1 = 0 reduces to RMS-style updates.
class Adam {
  public:
    Adam(double lr, double beta1, double beta2, const ParamSet& params);
    void step(ParamSet& params, const std::vector<Tensor4>& grads);

  private:
    double lr_, beta1_, beta2_;
    std::int64_t t_ = 0;
    std::vector<Tensor4> m_, v_;
};

// Elementwise convex combination eps*y + (1-eps)*g. eps outside [0,1] is an error.
Tensor4 interpolate(const Tensor4& y, const Tensor4& g, double eps);

// Batch-mean penalty (||grad_xhat score||_2 - 1)^2. score_per_sample_sum must
// be the sum over samples of each sample's scalar critic output so that the
// per-sample gradient blocks come out unscaled.
Graph::Id gradient_penalty_node(Graph& g, Graph::Id xhat, Graph::Id score_per_sample_sum);

// Standalone penalty for one batch at fixed epsilon values (one per sample).
double gradient_penalty(const CriticNet& critic, const Tensor4& x01, const Tensor4& xhat01);

struct CriticLossValue {
    double total = 0, d_fake = 0, d_real = 0, gp = 0;
};

// E[D(G(x)|x)] - E[D(y|x)] + lambda_gp * GP; the critic minimizes this.
CriticLossValue critic_loss(const CriticNet& critic, const Tensor4& x01, const Tensor4& y01,
                            const Tensor4& fake01, const std::vector<double>& eps,
                            double lambda_gp);

// One batch's worth of loss targets, stacked along the batch dimension.
struct BatchTargets {
    Tensor4 x01, y01;
    Tensor4 content;                               // F4(x), feature modes only
    std::array<std::vector<Tensor4>, 3> style_blocks;  // blocks of y per layer
    std::array<std::vector<int>, 3> shifts;
};

struct GenLossNodes {
    Graph::Id total = -1, content = -1, style = -1, adversarial = -1;
};

// Assembles the generator objective for the active mode on an existing fake01
// node. The critic (when given) is bound frozen; `content`/`style` are the raw
// unweighted parts (see LossBreakdown).
GenLossNodes generator_loss_nodes(Graph& g, Graph::Id x01, Graph::Id fake01,
                                  const BatchTargets& targets, const CriticNet* critic,
                                  const FeatureNet* fnet, const TrainConfig& cfg);

// Precomputed per-pair loss targets: content features of x and the spatial
// Gram blocks of y. Lazy; lives for the whole training run.
class TargetCache {
  public:
    TargetCache(const PairSet& pairs, const FeatureNet* fnet);
    const Tensor4& x01(int pair) const;
    const Tensor4& y01(int pair) const;
    const Tensor4& content_target(int pair) const;               // F4(x)
    const std::vector<Tensor4>& style_targets(int pair, int l) const;  // blocks of y
    const std::vector<int>& shifts(int l) const { return shifts_[l - 1]; }

  private:
    void ensure_features(int pair) const;

    const PairSet& pairs_;
    const FeatureNet* fnet_;
    std::array<std::vector<int>, 3> shifts_;
    mutable std::vector<Tensor4> x_, y_;
    mutable std::vector<Tensor4> content_;
    mutable std::vector<std::array<std::vector<Tensor4>, 3>> style_;
    mutable std::vector<char> have_features_;
};

// Full loop: per step {forward G once; n_critic critic updates; one generator
// update}, Adam on both nets, deterministic under cfg.seed. fnet may be null
// only for l1_wgan_gp. When lambda_gan is 0 (or mode is texture_net) the
// critic phase is skipped entirely, so degenerate configs reduce exactly to
// their critic-free counterparts. Writes checkpoints/loss CSV into ckpt_dir
// when non-empty. Throws NumericError if a loss goes non-finite.
TrainResult train(const PairSet& pairs, const TrainConfig& cfg, const FeatureNet* fnet,
                  const std::string& ckpt_dir = "");

// Critic-only training against a frozen generator (the generator is applied
// once per pair up front). Returns the trained critic.
CriticNet train_critic_only(const PairSet& pairs, const GeneratorNet& frozen,
                            const TrainConfig& cfg, int steps);

// Mean ||grad_xhat D(xhat|x)||_2 over fresh random interpolates.
double mean_interpolate_grad_norm(const CriticNet& critic, const PairSet& pairs,
                                  const GeneratorNet& frozen, int n_probes,
                                  std::uint64_t seed);

// Pixel-space descent: start at the content patch, minimize content loss plus
// lambda * style loss (spatial or plain Gram variant), clamping to the pixel
// range each step.
QuantImage gatys_optimize(const QuantImage& content, const QuantImage& style,
                          const FeatureNet& fnet, int iters, double step_size,
                          bool spatial = true,
                          const texture::StyleWeights& weights = {},
                          std::vector<double>* loss_trace = nullptr);

}  // namespace dgan
