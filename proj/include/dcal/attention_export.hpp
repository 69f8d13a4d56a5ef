#pragma once

#include <string>
#include <vector>

namespace dcal {

// Writes the CLS attention responses as a grid-resolution P5 PGM, min-max
// normalized to [0,255], plus a sidecar "<out_path>.sel.txt" listing the
// top-R selected patch coordinates. A constant response map is degenerate:
// the image is all zeros and the sidecar carries a flag line.
void export_attention_map(const std::vector<double>& responses, int grid_rows,
                          int grid_cols, double ratio,
                          const std::string& out_path);

}  // namespace dcal
