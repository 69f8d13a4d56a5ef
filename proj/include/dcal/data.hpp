#pragma once

#include <string>
#include <vector>

#include "dcal/embedding.hpp"

namespace dcal {

// Synthetic fine-grained task: every image shares one noise background; a
// class is defined by a small textured cue and where it sits on the patch
// grid, jittered by at most one patch per sample. Discriminative evidence
// is local, global statistics are shared.
struct SyntheticSpec {
  int num_classes = 8;
  int samples_per_class = 50;
  int image_width = 32;
  int image_height = 32;
  int patch = 8;
  int channels = 1;
  unsigned long long background_texture_seed = 1;
  int cue_size = 8;        // pixels
  double cue_contrast = 0.8;
};

struct Dataset {
  std::vector<ImageSample> train;
  std::vector<ImageSample> test;
};

// Deterministic in (spec, seed); pixel values quantized to 8-bit levels so
// the in-memory dataset and its on-disk PGM/PPM form agree exactly.
// 80/20 stratified train/test split.
Dataset gen_synthetic(const SyntheticSpec& spec, unsigned long long seed);

// Directory of PGM/PPM files plus manifest.tsv (path, label, split).
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace dcal
