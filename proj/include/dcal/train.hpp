#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "dcal/checkpoint.hpp"
#include "dcal/config.hpp"
#include "dcal/data.hpp"
#include "dcal/model.hpp"

namespace dcal {

// lr = 0.5 base (1 + cos(pi step / total)).
double cosine_lr(int step, int total_steps, double base_lr);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double loss_sa = 0, loss_glca = 0, loss_pwca = 0;
  double w_sa = 0, w_glca = 0, w_pwca = 0;
  double train_acc = 0;
};

struct TrainState {
  DcalParams<float> params;
  std::map<std::string, std::vector<float>> m1;  // Adam first moment / SGD velocity
  std::map<std::string, std::vector<float>> m2;  // Adam second moment
  long long opt_steps = 0;
  int epoch = 0;  // epochs completed
  std::vector<EpochMetrics> history;
};

TrainState init_train_state(const RunConfig& cfg);

// Runs `n_epochs` more epochs. Deterministic in (dataset, cfg, state):
// the epoch number and the configured seed drive all stochastic draws, so
// a resumed run continues bit-for-bit. Stops early once the train accuracy
// reaches `stop_at_train_acc` (disabled when negative).
void train_epochs(TrainState& state, const Dataset& ds, const RunConfig& cfg,
                  int n_epochs, std::ostream* metrics_out = nullptr,
                  double stop_at_train_acc = -1.0, bool verbose = false);

double evaluate_classification(const std::vector<ImageSample>& samples,
                               const DcalConfig& cfg,
                               const DcalParams<float>& params, InferMode mode);

struct RetrievalMetrics {
  double mean_ap = 0;
  double rank1 = 0;
  int skipped = 0;  // queries whose identity is absent from the gallery
};

// Euclidean ranking; when `same_set` is true, query i is excluded from its
// own gallery slot.
RetrievalMetrics retrieval_metrics(const std::vector<std::vector<float>>& queries,
                                   const std::vector<int>& query_labels,
                                   const std::vector<std::vector<float>>& gallery,
                                   const std::vector<int>& gallery_labels,
                                   bool same_set);

RetrievalMetrics evaluate_retrieval(const std::vector<ImageSample>& queries,
                                    const std::vector<ImageSample>& gallery,
                                    const DcalConfig& cfg,
                                    const DcalParams<float>& params, bool same_set,
                                    InferMode mode = InferMode::sa_glca);

// Training state persisted as a checkpoint with extra `opt.*` tensors.
void save_train_state(const std::string& path, const TrainState& state,
                      const RunConfig& cfg);
TrainState load_train_state(const std::string& path, RunConfig& cfg_out);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);

}  // namespace dcal
