#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcal/attention_export.hpp"
#include "dcal/checkpoint.hpp"
#include "dcal/config.hpp"
#include "dcal/cross_attention.hpp"
#include "dcal/data.hpp"
#include "dcal/model.hpp"
#include "dcal/pnm.hpp"
#include "dcal/train.hpp"

namespace {

using namespace dcal;

InferMode parse_mode(const std::string& mode) {
  if (mode == "sa") return InferMode::sa;
  if (mode == "glca") return InferMode::glca;
  if (mode == "sa+glca") return InferMode::sa_glca;
  throw CLI::ValidationError("--mode", "unknown mode '" + mode + "'");
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 unsigned long long seed) {
  RunConfig cfg = load_config_file(config_path);
  Dataset ds = gen_synthetic(cfg.synthetic(), seed);
  write_dataset(out_dir, ds);
  std::cout << "wrote " << ds.train.size() << " train / " << ds.test.size()
            << " test samples to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_path, long long seed_override) {
  RunConfig cfg = load_config_file(config_path);
  if (seed_override >= 0)
    cfg.hyper.seed = static_cast<unsigned long long>(seed_override);
  Dataset ds = load_dataset(data_dir);
  TrainState state = init_train_state(cfg);

  const auto metrics_path =
      std::filesystem::path(out_path).parent_path() / "metrics.tsv";
  std::ofstream metrics(metrics_path, std::ios::binary);
  write_metrics_header(metrics);
  train_epochs(state, ds, cfg, cfg.hyper.epochs, &metrics, -1.0, true);
  save_train_state(out_path, state, cfg);
  std::cout << "checkpoint written to " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& mode_str) {
  InferMode mode = parse_mode(mode_str);
  auto [params, cfg] = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(data_dir);
  if (cfg.model.task == Task::classification) {
    double top1 = evaluate_classification(ds.test, cfg.model, params, mode);
    std::cout << "top1=" << top1 << "\n";
  } else {
    auto m = evaluate_retrieval(ds.test, ds.test, cfg.model, params, true, mode);
    std::cout << "map=" << m.mean_ap << " rank1=" << m.rank1;
    if (m.skipped > 0) std::cout << " skipped=" << m.skipped;
    std::cout << "\n";
  }
  return 0;
}

int cmd_attend(const std::string& ckpt_path, const std::string& image_path,
               const std::string& out_path, int layer) {
  auto [params, cfg] = load_checkpoint(ckpt_path);
  if (layer == 0) layer = cfg.model.effective_glca_depth();
  if (layer < 1 || layer > cfg.model.depth) {
    std::cerr << "attend: --layer must be in [1, " << cfg.model.depth << "]\n";
    return 2;
  }
  ImageSample img = read_pnm(image_path);
  img.label = 0;
  auto res = forward_infer(img, cfg.model, params,
                           cfg.model.glca_blocks == 1 ? InferMode::sa_glca
                                                      : InferMode::sa);
  std::vector<Tensor<float>> bars;
  for (int i = 0; i < layer; ++i) bars.push_back(renormalize(res.attn_avg[i]));
  auto responses = cls_response(rollout(bars));
  export_attention_map(responses, img.height / cfg.model.patch,
                       img.width / cfg.model.patch, cfg.model.ratio, out_path);
  std::cout << "attention map written to " << out_path << "\n";
  return 0;
}

// Structural invariants evaluated against a concrete checkpoint.
int cmd_check(const std::string& ckpt_path) {
  auto [params, cfg] = load_checkpoint(ckpt_path);
  bool ok = true;
  auto report = [&ok](const std::string& name, bool pass) {
    std::cout << (pass ? "[ok]   " : "[FAIL] ") << name << "\n";
    ok = ok && pass;
  };

  // Probe image with deterministic texture.
  ImageSample img;
  img.width = cfg.model.image_width;
  img.height = cfg.model.image_height;
  img.channels = cfg.model.channels;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& p : img.pixels) p = u(rng);

  auto res = forward_infer(img, cfg.model, params,
                           cfg.model.glca_blocks == 1 ? InferMode::sa_glca
                                                      : InferMode::sa);

  // Row-stochastic attention and rollout.
  double worst_row = 0, worst_roll = 0;
  std::vector<Tensor<float>> bars;
  for (const auto& s : res.attn_avg) {
    for (int i = 0; i < s.rows(); ++i) {
      double sum = 0;
      for (int j = 0; j < s.cols(); ++j) sum += s.at(i, j);
      worst_row = std::max(worst_row, std::abs(sum - 1.0));
    }
    bars.push_back(renormalize(s));
  }
  auto rolled = rollout(bars).s_hat;
  for (int i = 0; i < rolled.rows(); ++i) {
    double sum = 0;
    for (int j = 0; j < rolled.cols(); ++j) sum += rolled.at(i, j);
    worst_roll = std::max(worst_roll, std::abs(sum - 1.0));
  }
  report("attention maps row-stochastic (1e-6)", worst_row < 1e-6);
  report("rollout row-stochastic (1e-5)", worst_roll < 1e-5);

  // Duplicate-pair PWCA identity at the model's head width.
  {
    const int n = cfg.model.patch_count() + 1;
    const int d = cfg.model.dim / cfg.model.heads;
    std::normal_distribution<float> g(0.0f, 1.0f);
    auto rand_t = [&](int r, int c) {
      Tensor<float> t({r, c});
      for (auto& v : t.data()) v = g(rng);
      return t;
    };
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
      Tensor<float> q = rand_t(n, d), k = rand_t(n, d), v = rand_t(n, d);
      auto dup = pwca(q, k, v, k, v).output;
      auto ref = scaled_dot_attention(q, k, v).output;
      for (std::size_t i = 0; i < dup.numel(); ++i)
        worst = std::max(worst,
                         std::abs(double(dup.data()[i]) - ref.data()[i]));
    }
    report("duplicate-pair PWCA identity (1e-5)", worst < 1e-5);
  }

  // PWCA removal: inference is unchanged when the config carries T=0.
  {
    DcalConfig stripped = cfg.model;
    stripped.pwca_depth = 0;
    auto res2 = forward_infer(img, stripped, params,
                              cfg.model.glca_blocks == 1 ? InferMode::sa_glca
                                                         : InferMode::sa);
    bool same = res.logits_sa.data() == res2.logits_sa.data();
    if (cfg.model.task == Task::classification)
      same = same && res.class_probs == res2.class_probs;
    report("PWCA removal leaves inference bitwise identical", same);
  }

  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual cross-attention learning: training, evaluation and "
               "attention-map tools"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, ckpt_path, image_path;
  std::string mode = "sa+glca";
  long long seed_override = -1;
  unsigned long long gen_seed = 0;
  int layer = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--out", out_path)->required();
  gen->add_option("--seed", gen_seed)->required();

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path)->required();
  train->add_option("--data", data_dir)->required();
  train->add_option("--out", out_path)->required();
  train->add_option("--seed", seed_override);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt_path)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--mode", mode)->check(CLI::IsMember({"sa", "glca", "sa+glca"}));

  auto* attend = app.add_subcommand("attend", "Export an attention heatmap");
  attend->add_option("--ckpt", ckpt_path)->required();
  attend->add_option("--image", image_path)->required();
  attend->add_option("--out", out_path)->required();
  attend->add_option("--layer", layer);

  auto* check = app.add_subcommand("check", "Run invariant checks on a checkpoint");
  check->add_option("--ckpt", ckpt_path)->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(config_path, out_path, gen_seed);
    if (train->parsed()) return cmd_train(config_path, data_dir, out_path, seed_override);
    if (eval->parsed()) return cmd_eval(ckpt_path, data_dir, mode);
    if (attend->parsed()) return cmd_attend(ckpt_path, image_path, out_path, layer);
    if (check->parsed()) return cmd_check(ckpt_path);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
