#include "dcal/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dcal {

double cosine_lr(int step, int total_steps, double base_lr) {
  if (step < 0 || total_steps <= 0 || step > total_steps)
    throw std::invalid_argument("cosine_lr: step outside [0, total_steps]");
  return 0.5 * base_lr * (1.0 + std::cos(M_PI * step / total_steps));
}

namespace {

unsigned long long mix_seed(unsigned long long a, unsigned long long b) {
  unsigned long long z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Decay applies to weight matrices only, not biases, layer norms, tokens or
// loss weights.
bool decays(const std::string& name) {
  if (name.find(".w_") != std::string::npos) return true;
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0;
}

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void optimizer_step(TrainState& state, const Hyper& hyper, double lr) {
  if (hyper.optimizer == OptimizerKind::adam) ++state.opt_steps;
  for (auto& [name, t] : state.params.named()) {
    if (!t.has_grad()) continue;  // parameter not reached by this loss
    const auto& g = t.grad();
    auto& v = t.data();
    if (hyper.optimizer == OptimizerKind::adam) {
      auto& m = state.m1[name];
      auto& s = state.m2[name];
      if (m.empty()) m.assign(v.size(), 0.0f);
      if (s.empty()) s.assign(v.size(), 0.0f);
      const double bc1 = 1.0 - std::pow(kAdamBeta1, state.opt_steps);
      const double bc2 = 1.0 - std::pow(kAdamBeta2, state.opt_steps);
      const bool wd = decays(name);
      for (std::size_t i = 0; i < v.size(); ++i) {
        m[i] = static_cast<float>(kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i]);
        s[i] = static_cast<float>(kAdamBeta2 * s[i] +
                                  (1.0 - kAdamBeta2) * double(g[i]) * g[i]);
        double step = lr * (m[i] / bc1) / (std::sqrt(s[i] / bc2) + kAdamEps);
        if (wd) step += lr * hyper.weight_decay * v[i];  // decoupled decay
        v[i] = static_cast<float>(v[i] - step);
      }
    } else {
      auto& vel = state.m1[name];
      if (vel.empty()) vel.assign(v.size(), 0.0f);
      const bool wd = decays(name);
      for (std::size_t i = 0; i < v.size(); ++i) {
        double grad = g[i] + (wd ? hyper.weight_decay * v[i] : 0.0);
        vel[i] = static_cast<float>(hyper.momentum * vel[i] + grad);
        v[i] = static_cast<float>(v[i] - lr * vel[i]);
      }
    }
    t.clear_grad();
  }
}

}  // namespace

TrainState init_train_state(const RunConfig& cfg) {
  TrainState state;
  state.params = init_params<float>(cfg.model, cfg.hyper.seed);
  return state;
}

void train_epochs(TrainState& state, const Dataset& ds, const RunConfig& cfg,
                  int n_epochs, std::ostream* metrics_out,
                  double stop_at_train_acc, bool verbose) {
  if (ds.train.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.hyper.batch < 2) throw std::invalid_argument("train: batch must be >= 2");
  if (cfg.hyper.batch > static_cast<int>(ds.train.size()))
    throw std::invalid_argument("train: batch larger than dataset");

  for (int e = 0; e < n_epochs; ++e) {
    const int epoch = state.epoch;
    if (epoch >= cfg.hyper.epochs) break;
    const double lr = cosine_lr(epoch, cfg.hyper.epochs, cfg.hyper.base_lr);
    std::mt19937_64 rng(mix_seed(cfg.hyper.seed, epoch));
    std::vector<int> order(ds.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.hyper.batch) {
      std::size_t end = std::min(order.size(),
                                 start + static_cast<std::size_t>(cfg.hyper.batch));
      if (end - start < 2) break;  // a trailing singleton cannot form a pair
      std::vector<ImageSample> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(ds.train[order[i]]);
      auto res = batch_training_loss(batch, cfg.model, state.params, rng);
      backward(res.total);
      optimizer_step(state, cfg.hyper, lr);
      m.loss_sa += res.loss_sa;
      m.loss_glca += res.loss_glca;
      m.loss_pwca += res.loss_pwca;
      ++batches;
    }
    if (batches > 0) {
      m.loss_sa /= batches;
      m.loss_glca /= batches;
      m.loss_pwca /= batches;
    }
    m.w_sa = state.params.w_sa.value();
    m.w_glca = state.params.w_glca.value();
    m.w_pwca = state.params.w_pwca.value();
    const InferMode mode =
        cfg.model.glca_blocks == 1 ? InferMode::sa_glca : InferMode::sa;
    m.train_acc = evaluate_classification(ds.train, cfg.model, state.params, mode);
    state.history.push_back(m);
    state.epoch = epoch + 1;
    if (metrics_out) write_metrics_row(*metrics_out, m);
    if (verbose)
      std::cerr << "epoch " << epoch << " lr " << lr << " loss_sa " << m.loss_sa
                << " train_acc " << m.train_acc << "\n";
    if (stop_at_train_acc >= 0 && m.train_acc >= stop_at_train_acc) break;
  }
}

double evaluate_classification(const std::vector<ImageSample>& samples,
                               const DcalConfig& cfg,
                               const DcalParams<float>& params, InferMode mode) {
  if (samples.empty()) return 0.0;
  int correct = 0;
  for (const auto& img : samples) {
    auto res = forward_infer(img, cfg, params, mode);
    if (res.prediction == img.label) ++correct;
  }
  return static_cast<double>(correct) / samples.size();
}

RetrievalMetrics retrieval_metrics(const std::vector<std::vector<float>>& queries,
                                   const std::vector<int>& query_labels,
                                   const std::vector<std::vector<float>>& gallery,
                                   const std::vector<int>& gallery_labels,
                                   bool same_set) {
  if (queries.size() != query_labels.size() ||
      gallery.size() != gallery_labels.size())
    throw std::invalid_argument("retrieval_metrics: label count mismatch");
  RetrievalMetrics out;
  double sum_ap = 0;
  int rank1_hits = 0, used = 0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    std::vector<std::pair<double, int>> ranked;
    for (std::size_t gi = 0; gi < gallery.size(); ++gi) {
      if (same_set && gi == qi) continue;
      double d2 = 0;
      for (std::size_t t = 0; t < queries[qi].size(); ++t) {
        double d = double(queries[qi][t]) - gallery[gi][t];
        d2 += d * d;
      }
      ranked.emplace_back(d2, static_cast<int>(gi));
    }
    std::stable_sort(ranked.begin(), ranked.end());
    int positives = 0;
    for (const auto& [d, gi] : ranked)
      if (gallery_labels[gi] == query_labels[qi]) ++positives;
    if (positives == 0) {
      ++out.skipped;
      continue;
    }
    ++used;
    if (gallery_labels[ranked[0].second] == query_labels[qi]) ++rank1_hits;
    double ap = 0;
    int hits = 0;
    for (std::size_t r = 0; r < ranked.size(); ++r)
      if (gallery_labels[ranked[r].second] == query_labels[qi]) {
        ++hits;
        ap += static_cast<double>(hits) / (r + 1);
      }
    sum_ap += ap / positives;
  }
  if (used > 0) {
    out.mean_ap = sum_ap / used;
    out.rank1 = static_cast<double>(rank1_hits) / used;
  }
  return out;
}

RetrievalMetrics evaluate_retrieval(const std::vector<ImageSample>& queries,
                                    const std::vector<ImageSample>& gallery,
                                    const DcalConfig& cfg,
                                    const DcalParams<float>& params, bool same_set,
                                    InferMode mode) {
  auto extract = [&](const std::vector<ImageSample>& set) {
    std::vector<std::vector<float>> feats;
    std::vector<int> labels;
    for (const auto& img : set) {
      auto res = forward_infer(img, cfg, params, mode);
      feats.push_back(res.feature.data());
      labels.push_back(img.label);
    }
    return std::make_pair(feats, labels);
  };
  auto [qf, ql] = extract(queries);
  auto [gf, gl] = extract(gallery);
  return retrieval_metrics(qf, ql, gf, gl, same_set);
}

void save_train_state(const std::string& path, const TrainState& state,
                      const RunConfig& cfg) {
  CheckpointData data;
  data.tensors = state.params.named();
  for (const auto& [name, vals] : state.m1)
    data.tensors.emplace_back(
        "opt.m1." + name,
        Tensor<float>::from_data({static_cast<int>(vals.size())}, vals));
  for (const auto& [name, vals] : state.m2)
    data.tensors.emplace_back(
        "opt.m2." + name,
        Tensor<float>::from_data({static_cast<int>(vals.size())}, vals));
  data.tensors.emplace_back(
      "opt.steps",
      Tensor<float>::from_data({1}, {static_cast<float>(state.opt_steps)}));
  data.tensors.emplace_back(
      "opt.epoch", Tensor<float>::from_data({1}, {static_cast<float>(state.epoch)}));
  data.config_text = serialize_config(cfg);
  save_checkpoint_raw(path, data);
}

TrainState load_train_state(const std::string& path, RunConfig& cfg_out) {
  CheckpointData data = load_checkpoint_raw(path);
  cfg_out = parse_config(data.config_text);
  TrainState state;
  state.params = init_params<float>(cfg_out.model, 0);
  fill_params_from(data, state.params);
  for (const auto& [name, t] : data.tensors) {
    if (name.rfind("opt.m1.", 0) == 0) state.m1[name.substr(7)] = t.data();
    else if (name.rfind("opt.m2.", 0) == 0) state.m2[name.substr(7)] = t.data();
    else if (name == "opt.steps") state.opt_steps = static_cast<long long>(t.data()[0]);
    else if (name == "opt.epoch") state.epoch = static_cast<int>(t.data()[0]);
  }
  return state;
}

void write_metrics_header(std::ostream& out) {
  out << "epoch\tlr\tloss_sa\tloss_glca\tloss_pwca\tw_sa\tw_glca\tw_pwca\t"
         "train_acc\n";
}

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
  out << m.epoch << '\t' << m.lr << '\t' << m.loss_sa << '\t' << m.loss_glca
      << '\t' << m.loss_pwca << '\t' << m.w_sa << '\t' << m.w_glca << '\t'
      << m.w_pwca << '\t' << m.train_acc << '\n';
  out.flush();
}

}  // namespace dcal
