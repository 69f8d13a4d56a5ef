#include "dcal/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dcal {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& k, const std::string& v) {
  try {
    std::size_t pos;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + k + ": '" + v + "'");
  }
}

double to_double(const std::string& k, const std::string& v) {
  try {
    std::size_t pos;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + k + ": '" + v + "'");
  }
}

unsigned long long to_u64(const std::string& k, const std::string& v) {
  try {
    std::size_t pos;
    unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad unsigned for " + k + ": '" + v + "'");
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not 'key = value'");
    std::string k = trim(line.substr(0, eq));
    std::string v = trim(line.substr(eq + 1));

    if (k == "L") cfg.model.depth = to_int(k, v);
    else if (k == "M") cfg.model.glca_blocks = to_int(k, v);
    else if (k == "T") cfg.model.pwca_depth = to_int(k, v);
    else if (k == "H") cfg.model.heads = to_int(k, v);
    else if (k == "D") cfg.model.dim = to_int(k, v);
    else if (k == "P") cfg.model.patch = to_int(k, v);
    else if (k == "R") cfg.model.ratio = to_double(k, v);
    else if (k == "num_classes") cfg.model.num_classes = to_int(k, v);
    else if (k == "task") {
      if (v == "classification") cfg.model.task = Task::classification;
      else if (v == "retrieval") cfg.model.task = Task::retrieval;
      else throw std::invalid_argument("config: unknown task '" + v + "'");
    }
    else if (k == "drop_path_max") cfg.model.drop_path_max = to_double(k, v);
    else if (k == "glca_depth") cfg.model.glca_depth = to_int(k, v);
    else if (k == "triplet_margin") cfg.model.triplet_margin = to_double(k, v);
    else if (k == "image_width") cfg.model.image_width = to_int(k, v);
    else if (k == "image_height") cfg.model.image_height = to_int(k, v);
    else if (k == "channels") cfg.model.channels = to_int(k, v);
    else if (k == "optimizer") {
      if (v == "adam") cfg.hyper.optimizer = OptimizerKind::adam;
      else if (v == "sgd") cfg.hyper.optimizer = OptimizerKind::sgd;
      else throw std::invalid_argument("config: unknown optimizer '" + v + "'");
    }
    else if (k == "base_lr") cfg.hyper.base_lr = to_double(k, v);
    else if (k == "weight_decay") cfg.hyper.weight_decay = to_double(k, v);
    else if (k == "momentum") cfg.hyper.momentum = to_double(k, v);
    else if (k == "epochs") cfg.hyper.epochs = to_int(k, v);
    else if (k == "batch") cfg.hyper.batch = to_int(k, v);
    else if (k == "seed") cfg.hyper.seed = to_u64(k, v);
    else if (k == "samples_per_class") cfg.samples_per_class = to_int(k, v);
    else if (k == "cue_size") cfg.cue_size = to_int(k, v);
    else if (k == "cue_contrast") cfg.cue_contrast = to_double(k, v);
    else if (k == "background_texture_seed")
      cfg.background_texture_seed = to_u64(k, v);
    else
      throw std::invalid_argument("config: unknown key '" + k + "'");
  }
  cfg.model.validate();
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "L = " << cfg.model.depth << "\n"
      << "M = " << cfg.model.glca_blocks << "\n"
      << "T = " << cfg.model.pwca_depth << "\n"
      << "H = " << cfg.model.heads << "\n"
      << "D = " << cfg.model.dim << "\n"
      << "P = " << cfg.model.patch << "\n"
      << "R = " << cfg.model.ratio << "\n"
      << "num_classes = " << cfg.model.num_classes << "\n"
      << "task = "
      << (cfg.model.task == Task::classification ? "classification" : "retrieval")
      << "\n"
      << "drop_path_max = " << cfg.model.drop_path_max << "\n"
      << "glca_depth = " << cfg.model.glca_depth << "\n"
      << "triplet_margin = " << cfg.model.triplet_margin << "\n"
      << "image_width = " << cfg.model.image_width << "\n"
      << "image_height = " << cfg.model.image_height << "\n"
      << "channels = " << cfg.model.channels << "\n"
      << "optimizer = "
      << (cfg.hyper.optimizer == OptimizerKind::adam ? "adam" : "sgd") << "\n"
      << "base_lr = " << cfg.hyper.base_lr << "\n"
      << "weight_decay = " << cfg.hyper.weight_decay << "\n"
      << "momentum = " << cfg.hyper.momentum << "\n"
      << "epochs = " << cfg.hyper.epochs << "\n"
      << "batch = " << cfg.hyper.batch << "\n"
      << "seed = " << cfg.hyper.seed << "\n"
      << "samples_per_class = " << cfg.samples_per_class << "\n"
      << "cue_size = " << cfg.cue_size << "\n"
      << "cue_contrast = " << cfg.cue_contrast << "\n"
      << "background_texture_seed = " << cfg.background_texture_seed << "\n";
  return out.str();
}

}  // namespace dcal
