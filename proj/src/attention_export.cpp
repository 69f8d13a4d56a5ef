#include "dcal/attention_export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dcal/rollout.hpp"

namespace dcal {

void export_attention_map(const std::vector<double>& responses, int grid_rows,
                          int grid_cols, double ratio,
                          const std::string& out_path) {
  if (static_cast<int>(responses.size()) != grid_rows * grid_cols)
    throw std::invalid_argument("export_attention_map: " +
                                std::to_string(responses.size()) +
                                " responses do not fill a " +
                                std::to_string(grid_rows) + "x" +
                                std::to_string(grid_cols) + " grid");
  const double lo = *std::min_element(responses.begin(), responses.end());
  const double hi = *std::max_element(responses.begin(), responses.end());
  const bool degenerate = !(hi > lo);

  std::ofstream img(out_path, std::ios::binary);
  if (!img) throw std::runtime_error("export_attention_map: cannot write " + out_path);
  img << "P5\n" << grid_cols << " " << grid_rows << "\n255\n";
  for (double r : responses) {
    int v = degenerate
                ? 0
                : static_cast<int>(std::lround((r - lo) / (hi - lo) * 255.0));
    img.put(static_cast<char>(std::min(255, std::max(0, v))));
  }

  LocalSelection sel = select_local_queries(responses, ratio);
  std::ofstream side(out_path + ".sel.txt", std::ios::binary);
  if (!side)
    throw std::runtime_error("export_attention_map: cannot write sidecar for " +
                             out_path);
  if (degenerate) side << "degenerate 1\n";
  for (std::size_t i = 1; i < sel.indices.size(); ++i) {
    const int patch = sel.indices[i] - 1;  // token row -> patch index
    side << "patch " << patch / grid_cols << " " << patch % grid_cols << "\n";
  }
}

}  // namespace dcal
