#pragma once

#include <string>

#include "dcal/data.hpp"
#include "dcal/model.hpp"

namespace dcal {

enum class OptimizerKind { adam, sgd };

struct Hyper {
  OptimizerKind optimizer = OptimizerKind::adam;
  double base_lr = 5e-4;
  double weight_decay = 0.05;
  double momentum = 0.9;
  int epochs = 100;
  int batch = 16;
  unsigned long long seed = 42;
};

// Everything a run needs: architecture, optimization and data generation.
// Serialized as `key = value` lines; '#' starts a comment; unknown keys are
// rejected.
struct RunConfig {
  DcalConfig model;
  Hyper hyper;
  int samples_per_class = 50;
  int cue_size = 8;
  double cue_contrast = 0.8;
  unsigned long long background_texture_seed = 1;

  SyntheticSpec synthetic() const {
    SyntheticSpec s;
    s.num_classes = model.num_classes;
    s.samples_per_class = samples_per_class;
    s.image_width = model.image_width;
    s.image_height = model.image_height;
    s.patch = model.patch;
    s.channels = model.channels;
    s.background_texture_seed = background_texture_seed;
    s.cue_size = cue_size;
    s.cue_contrast = cue_contrast;
    return s;
  }
};

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

}  // namespace dcal
