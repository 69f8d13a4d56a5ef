#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dcal/attention.hpp"
#include "dcal/cross_attention.hpp"
#include "dcal/embedding.hpp"
#include "dcal/losses.hpp"
#include "dcal/ops.hpp"
#include "dcal/rollout.hpp"
#include "dcal/tensor.hpp"

namespace dcal {

enum class Task { classification, retrieval };
enum class InferMode { sa, glca, sa_glca };

struct DcalConfig {
  int depth = 4;            // L: self-attention blocks
  int glca_blocks = 1;      // M: 0 or 1
  int pwca_depth = 4;       // T <= L: blocks polluted during training
  int heads = 2;            // H
  int dim = 32;             // D
  int patch = 8;            // P
  double ratio = 0.25;      // R: local query selection ratio
  int num_classes = 8;
  Task task = Task::classification;
  double drop_path_max = 0.05;
  int glca_depth = 0;       // layer feeding GLCA; 0 means L
  double triplet_margin = 0.3;
  int image_width = 32;
  int image_height = 32;
  int channels = 1;

  int effective_glca_depth() const { return glca_depth == 0 ? depth : glca_depth; }
  int grid_rows() const { return image_height / patch; }
  int grid_cols() const { return image_width / patch; }
  int patch_count() const { return grid_rows() * grid_cols(); }
  int patch_dim() const { return patch * patch * channels; }
  int feature_dim() const { return dim; }

  void validate() const {
    if (depth < 1) throw std::invalid_argument("config: L must be >= 1");
    if (glca_blocks != 0 && glca_blocks != 1)
      throw std::invalid_argument("config: M must be 0 or 1");
    if (pwca_depth < 0 || pwca_depth > depth)
      throw std::invalid_argument("config: T must satisfy 0 <= T <= L");
    if (dim % heads != 0)
      throw std::invalid_argument("config: D must be divisible by H");
    if (!(ratio > 0.0 && ratio <= 1.0))
      throw std::invalid_argument("config: R must be in (0, 1]");
    if (image_width % patch != 0 || image_height % patch != 0)
      throw std::invalid_argument("config: image size not divisible by patch size");
    if (glca_depth < 0 || glca_depth > depth)
      throw std::invalid_argument("config: glca_depth must be in [0, L]");
    if (!(drop_path_max >= 0.0 && drop_path_max < 1.0))
      throw std::invalid_argument("config: drop_path_max must be in [0, 1)");
    if (num_classes < 1) throw std::invalid_argument("config: num_classes >= 1");
    if (channels != 1 && channels != 3)
      throw std::invalid_argument("config: channels must be 1 or 3");
  }
};

// All learnable state. PWCA owns nothing: it aliases the SA blocks and the
// SA classifier. GLCA holds its own block and classifier.
template <typename T>
struct DcalParams {
  Tensor<T> w_proj;                        // patch_dim x D
  Tensor<T> cls;                           // 1 x D
  Tensor<T> pos;                           // (N+1) x D
  std::vector<EncoderBlockParams<T>> sa;   // L blocks
  EncoderBlockParams<T> glca;              // independent weights
  Tensor<T> w_cls_sa, b_cls_sa;            // D x C, 1 x C
  Tensor<T> w_cls_glca, b_cls_glca;
  Tensor<T> w_sa, w_glca, w_pwca;          // dynamic loss weights, scalars

  // Deterministic (name, tensor) enumeration used by the optimizer and the
  // checkpoint writer.
  std::vector<std::pair<std::string, Tensor<T>>> named() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    out.emplace_back("embed.w_proj", w_proj);
    out.emplace_back("embed.cls", cls);
    out.emplace_back("embed.pos", pos);
    auto block = [&out](const std::string& prefix, const EncoderBlockParams<T>& b) {
      out.emplace_back(prefix + ".w_q", b.w_q);
      out.emplace_back(prefix + ".w_k", b.w_k);
      out.emplace_back(prefix + ".w_v", b.w_v);
      out.emplace_back(prefix + ".w_o", b.w_o);
      out.emplace_back(prefix + ".b_o", b.b_o);
      out.emplace_back(prefix + ".w_ff1", b.w_ff1);
      out.emplace_back(prefix + ".b_ff1", b.b_ff1);
      out.emplace_back(prefix + ".w_ff2", b.w_ff2);
      out.emplace_back(prefix + ".b_ff2", b.b_ff2);
      out.emplace_back(prefix + ".ln1_g", b.ln1_g);
      out.emplace_back(prefix + ".ln1_b", b.ln1_b);
      out.emplace_back(prefix + ".ln2_g", b.ln2_g);
      out.emplace_back(prefix + ".ln2_b", b.ln2_b);
    };
    for (std::size_t i = 0; i < sa.size(); ++i)
      block("sa." + std::to_string(i), sa[i]);
    block("glca", glca);
    out.emplace_back("head.sa.w", w_cls_sa);
    out.emplace_back("head.sa.b", b_cls_sa);
    out.emplace_back("head.glca.w", w_cls_glca);
    out.emplace_back("head.glca.b", b_cls_glca);
    out.emplace_back("loss.w_sa", w_sa);
    out.emplace_back("loss.w_glca", w_glca);
    out.emplace_back("loss.w_pwca", w_pwca);
    return out;
  }
};

namespace detail {

template <typename T>
Tensor<T> normal_init(std::vector<int> shape, std::mt19937_64& rng, double sigma) {
  Tensor<T> t(std::move(shape), T(0), true);
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
EncoderBlockParams<T> init_block(int d, std::mt19937_64& rng, double sigma) {
  const int d_ff = 4 * d;  // ViT convention
  EncoderBlockParams<T> b;
  b.w_q = normal_init<T>({d, d}, rng, sigma);
  b.w_k = normal_init<T>({d, d}, rng, sigma);
  b.w_v = normal_init<T>({d, d}, rng, sigma);
  b.w_o = normal_init<T>({d, d}, rng, sigma);
  b.b_o = Tensor<T>({1, d}, T(0), true);
  b.w_ff1 = normal_init<T>({d, d_ff}, rng, sigma);
  b.b_ff1 = Tensor<T>({1, d_ff}, T(0), true);
  b.w_ff2 = normal_init<T>({d_ff, d}, rng, sigma);
  b.b_ff2 = Tensor<T>({1, d}, T(0), true);
  b.ln1_g = Tensor<T>({1, d}, T(1), true);
  b.ln1_b = Tensor<T>({1, d}, T(0), true);
  b.ln2_g = Tensor<T>({1, d}, T(1), true);
  b.ln2_b = Tensor<T>({1, d}, T(0), true);
  return b;
}

}  // namespace detail

template <typename T>
DcalParams<T> init_params(const DcalConfig& cfg, unsigned long long seed,
                          double sigma = 0.02) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  DcalParams<T> p;
  p.w_proj = detail::normal_init<T>({cfg.patch_dim(), cfg.dim}, rng, sigma);
  p.cls = Tensor<T>({1, cfg.dim}, T(0), true);
  p.pos = detail::normal_init<T>({cfg.patch_count() + 1, cfg.dim}, rng, sigma);
  for (int i = 0; i < cfg.depth; ++i)
    p.sa.push_back(detail::init_block<T>(cfg.dim, rng, sigma));
  p.glca = detail::init_block<T>(cfg.dim, rng, sigma);
  p.w_cls_sa = detail::normal_init<T>({cfg.dim, cfg.num_classes}, rng, sigma);
  p.b_cls_sa = Tensor<T>({1, cfg.num_classes}, T(0), true);
  p.w_cls_glca = detail::normal_init<T>({cfg.dim, cfg.num_classes}, rng, sigma);
  p.b_cls_glca = Tensor<T>({1, cfg.num_classes}, T(0), true);
  p.w_sa = Tensor<T>({1, 1}, T(0), true);
  p.w_glca = Tensor<T>({1, 1}, T(0), true);
  p.w_pwca = Tensor<T>({1, 1}, T(0), true);
  return p;
}

// Linear stochastic-depth schedule: 0 at the first block, drop_path_max at
// the last.
inline double block_drop_prob(const DcalConfig& cfg, int block_index) {
  if (cfg.depth <= 1) return 0.0;
  return cfg.drop_path_max * block_index / (cfg.depth - 1);
}

template <typename T>
struct SaTrace {
  std::vector<Tensor<T>> inputs;     // state entering each block, L entries
  Tensor<T> output;                  // state after the last block
  std::vector<Tensor<T>> attn_avg;   // head-averaged S per layer, detached
};

template <typename T>
Tensor<T> classifier_logits(const Tensor<T>& cls_row, const Tensor<T>& w,
                            const Tensor<T>& b) {
  return add_rowvec(matmul(cls_row, w), b);
}

template <typename T>
TokenSequence<T> embed_image(const ImageSample& img, const DcalConfig& cfg,
                             const DcalParams<T>& params) {
  return embed_tokens(patchify<T>(img, cfg.patch), params.w_proj, params.cls,
                      params.pos, img.height / cfg.patch, img.width / cfg.patch);
}

template <typename T>
SaTrace<T> sa_forward(const Tensor<T>& tokens, const DcalConfig& cfg,
                      const DcalParams<T>& params, bool training,
                      std::mt19937_64& rng) {
  SaTrace<T> trace;
  Tensor<T> x = tokens;
  for (int i = 0; i < cfg.depth; ++i) {
    trace.inputs.push_back(x);
    auto blk = encoder_block(x, params.sa[i], cfg.heads,
                             static_cast<T>(block_drop_prob(cfg, i)), training, rng);
    x = blk.output;
    trace.attn_avg.push_back(head_average(blk.attention_heads).detach());
  }
  trace.output = x;
  return trace;
}

// Rollout over the first `glca_depth` layers and top-R query selection.
template <typename T>
LocalSelection glca_selection(const SaTrace<T>& trace, const DcalConfig& cfg) {
  const int gd = cfg.effective_glca_depth();
  std::vector<Tensor<T>> bars;
  for (int i = 0; i < gd; ++i) bars.push_back(renormalize(trace.attn_avg[i]));
  return select_local_queries(cls_response(rollout(bars)), cfg.ratio);
}

template <typename T>
struct ForwardOutputs {
  Tensor<T> logits_sa;
  Tensor<T> logits_glca;           // valid iff has_glca
  Tensor<T> logits_pwca;           // valid iff has_pwca (training only)
  Tensor<T> cls_sa;                // 1 x D
  Tensor<T> cls_glca;              // 1 x D, valid iff has_glca
  Tensor<T> cls_pwca;              // 1 x D, valid iff has_pwca
  bool has_glca = false;
  bool has_pwca = false;
  std::vector<Tensor<T>> attn_avg; // per-layer head-averaged S, detached
  LocalSelection selection;        // valid iff has_glca
};

namespace detail {

template <typename T>
ForwardOutputs<T> sa_glca_outputs(const SaTrace<T>& trace, const DcalConfig& cfg,
                                  const DcalParams<T>& params) {
  ForwardOutputs<T> out;
  out.attn_avg = trace.attn_avg;
  out.cls_sa = gather_rows(trace.output, {0});
  out.logits_sa = classifier_logits(out.cls_sa, params.w_cls_sa, params.b_cls_sa);
  if (cfg.glca_blocks == 1) {
    out.has_glca = true;
    out.selection = glca_selection(trace, cfg);
    const int gd = cfg.effective_glca_depth();
    const Tensor<T>& x_in = gd == cfg.depth ? trace.output : trace.inputs[gd];
    auto g = glca_block(x_in, out.selection, params.glca, cfg.heads);
    out.cls_glca = gather_rows(g.output, {0});
    out.logits_glca =
        classifier_logits(out.cls_glca, params.w_cls_glca, params.b_cls_glca);
  }
  return out;
}

}  // namespace detail

// Training forward over one pair. Both images run the SA branch (collecting
// per-layer states and attention maps), GLCA when enabled, and the PWCA
// branch with the partner's clean per-depth representation as distractor.
// The PWCA branch aliases the SA block parameters and the SA classifier.
template <typename T>
std::pair<ForwardOutputs<T>, ForwardOutputs<T>> forward_train(
    const ImageSample& img1, const ImageSample& img2, const DcalConfig& cfg,
    const DcalParams<T>& params, std::mt19937_64& rng) {
  cfg.validate();
  Tensor<T> x1 = embed_image(img1, cfg, params).tokens;
  Tensor<T> x2 = embed_image(img2, cfg, params).tokens;
  SaTrace<T> t1 = sa_forward(x1, cfg, params, true, rng);
  SaTrace<T> t2 = sa_forward(x2, cfg, params, true, rng);

  ForwardOutputs<T> o1 = detail::sa_glca_outputs(t1, cfg, params);
  ForwardOutputs<T> o2 = detail::sa_glca_outputs(t2, cfg, params);

  if (cfg.pwca_depth > 0) {
    auto run_pwca = [&](const Tensor<T>& x0, const SaTrace<T>& partner) {
      Tensor<T> x = x0;
      for (int i = 0; i < cfg.depth; ++i) {
        const T dp = static_cast<T>(block_drop_prob(cfg, i));
        if (i < cfg.pwca_depth) {
          x = pwca_block(x, partner.inputs[i], params.sa[i], cfg.heads, dp, true, rng)
                  .output;
        } else {
          x = encoder_block(x, params.sa[i], cfg.heads, dp, true, rng).output;
        }
      }
      return gather_rows(x, {0});
    };
    Tensor<T> cls1 = run_pwca(x1, t2);
    Tensor<T> cls2 = run_pwca(x2, t1);
    o1.has_pwca = true;
    o1.cls_pwca = cls1;
    o1.logits_pwca = classifier_logits(cls1, params.w_cls_sa, params.b_cls_sa);
    o2.has_pwca = true;
    o2.cls_pwca = cls2;
    o2.logits_pwca = classifier_logits(cls2, params.w_cls_sa, params.b_cls_sa);
  }
  return {o1, o2};
}

template <typename T>
struct InferResult {
  Tensor<T> logits_sa;             // valid unless mode == glca
  Tensor<T> logits_glca;           // valid iff mode uses GLCA
  std::vector<double> class_probs; // fused class probabilities (classification)
  Tensor<T> feature;               // retrieval feature (1 x D or 1 x 2D)
  int prediction = -1;
  std::vector<Tensor<T>> attn_avg;
  LocalSelection selection;        // valid iff GLCA ran
};

namespace detail {

template <typename T>
std::vector<double> softmax_probs(const Tensor<T>& logits) {
  double mx = logits.data()[0];
  for (T v : logits.data()) mx = std::max(mx, static_cast<double>(v));
  double sum = 0;
  std::vector<double> p(logits.numel());
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = std::exp(static_cast<double>(logits.data()[j]) - mx);
    sum += p[j];
  }
  for (auto& v : p) v /= sum;
  return p;
}

}  // namespace detail

// Inference never instantiates PWCA; drop-path is the identity. Mode sa_glca
// fuses by summing class probabilities (classification) or concatenating the
// two class tokens (retrieval).
template <typename T>
InferResult<T> forward_infer(const ImageSample& img, const DcalConfig& cfg,
                             const DcalParams<T>& params, InferMode mode) {
  cfg.validate();
  if (mode != InferMode::sa && cfg.glca_blocks == 0)
    throw std::invalid_argument("forward_infer: mode requires a GLCA block (M=1)");
  NoGradGuard no_grad;
  std::mt19937_64 rng(0);  // unused: inference takes no stochastic draws
  Tensor<T> tokens = embed_image(img, cfg, params).tokens;
  SaTrace<T> trace = sa_forward(tokens, cfg, params, false, rng);
  ForwardOutputs<T> o = detail::sa_glca_outputs(trace, cfg, params);

  InferResult<T> res;
  res.attn_avg = o.attn_avg;
  if (o.has_glca) res.selection = o.selection;
  res.logits_sa = o.logits_sa;
  if (mode != InferMode::sa) res.logits_glca = o.logits_glca;

  if (cfg.task == Task::classification) {
    std::vector<double> probs(cfg.num_classes, 0.0);
    if (mode == InferMode::sa || mode == InferMode::sa_glca) {
      auto p = detail::softmax_probs(o.logits_sa);
      for (int j = 0; j < cfg.num_classes; ++j) probs[j] += p[j];
    }
    if (mode == InferMode::glca || mode == InferMode::sa_glca) {
      auto p = detail::softmax_probs(o.logits_glca);
      for (int j = 0; j < cfg.num_classes; ++j) probs[j] += p[j];
    }
    res.class_probs = probs;
    int best = 0;
    for (int j = 1; j < cfg.num_classes; ++j)
      if (probs[j] > probs[best]) best = j;
    res.prediction = best;
  } else {
    switch (mode) {
      case InferMode::sa: res.feature = o.cls_sa; break;
      case InferMode::glca: res.feature = o.cls_glca; break;
      case InferMode::sa_glca:
        res.feature = concat_cols<T>({o.cls_sa, o.cls_glca});
        break;
    }
  }
  return res;
}

// Per-branch training losses over a batch, paired (0,1), (2,3), ...; an odd
// trailing element pairs with the first. Classification: mean cross-entropy
// per branch. Retrieval: mean cross-entropy plus batch-hard triplet on each
// branch's class-token features. Branch losses are combined with the
// learnable dynamic weights.
template <typename T>
struct BatchLossResult {
  Tensor<T> total;
  double loss_sa = 0, loss_glca = 0, loss_pwca = 0;
  bool has_glca = false, has_pwca = false;
};

template <typename T>
BatchLossResult<T> batch_training_loss(const std::vector<ImageSample>& batch,
                                       const DcalConfig& cfg,
                                       const DcalParams<T>& params,
                                       std::mt19937_64& rng) {
  if (batch.size() < 2)
    throw std::invalid_argument("batch_training_loss: batch must hold >= 2 samples");
  std::vector<Tensor<T>> ce_sa, ce_glca, ce_pwca;
  std::vector<Tensor<T>> feat_sa, feat_glca, feat_pwca;
  std::vector<int> labels;

  auto consume = [&](const ForwardOutputs<T>& o, int label) {
    ce_sa.push_back(cross_entropy(o.logits_sa, label));
    feat_sa.push_back(o.cls_sa);
    if (o.has_glca) {
      ce_glca.push_back(cross_entropy(o.logits_glca, label));
      feat_glca.push_back(o.cls_glca);
    }
    if (o.has_pwca) {
      ce_pwca.push_back(cross_entropy(o.logits_pwca, label));
      feat_pwca.push_back(o.cls_pwca);
    }
    labels.push_back(label);
  };

  for (std::size_t i = 0; i + 1 < batch.size(); i += 2) {
    auto [o1, o2] = forward_train(batch[i], batch[i + 1], cfg, params, rng);
    consume(o1, batch[i].label);
    consume(o2, batch[i + 1].label);
  }
  if (batch.size() % 2 == 1) {
    auto [o1, o2] = forward_train(batch.back(), batch.front(), cfg, params, rng);
    consume(o1, batch.back().label);
    (void)o2;  // the wrap partner already trained as a target
  }

  auto mean_of = [](std::vector<Tensor<T>>& terms) {
    Tensor<T> s = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) s = add(s, terms[i]);
    return scale(s, static_cast<T>(1.0 / terms.size()));
  };
  auto branch_loss = [&](std::vector<Tensor<T>>& ce, std::vector<Tensor<T>>& feats) {
    Tensor<T> loss = mean_of(ce);
    if (cfg.task == Task::retrieval && !feats.empty())
      loss = add(loss, triplet_loss(concat_rows(feats), labels,
                                    static_cast<T>(cfg.triplet_margin)));
    return loss;
  };

  std::vector<Tensor<T>> losses{branch_loss(ce_sa, feat_sa)};
  std::vector<Tensor<T>> weights{params.w_sa};
  BatchLossResult<T> res;
  res.loss_sa = static_cast<double>(losses[0].value());
  if (!ce_glca.empty()) {
    losses.push_back(branch_loss(ce_glca, feat_glca));
    weights.push_back(params.w_glca);
    res.has_glca = true;
    res.loss_glca = static_cast<double>(losses.back().value());
  }
  if (!ce_pwca.empty()) {
    losses.push_back(branch_loss(ce_pwca, feat_pwca));
    weights.push_back(params.w_pwca);
    res.has_pwca = true;
    res.loss_pwca = static_cast<double>(losses.back().value());
  }
  res.total = dynamic_loss(losses, weights);
  return res;
}

}  // namespace dcal
