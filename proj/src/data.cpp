#include "dcal/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dcal/pnm.hpp"

namespace dcal {

namespace {

float quantize(double v) {
  double c = std::min(1.0, std::max(0.0, v));
  return static_cast<float>(std::lround(c * 255.0) / 255.0);
}

unsigned long long mix_seed(unsigned long long a, unsigned long long b) {
  // splitmix64 round over the combined value
  unsigned long long z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Dataset gen_synthetic(const SyntheticSpec& spec, unsigned long long seed) {
  if (spec.cue_size > spec.image_width || spec.cue_size > spec.image_height)
    throw std::invalid_argument("gen_synthetic: cue larger than image");
  if (spec.num_classes < 1 || spec.samples_per_class < 1)
    throw std::invalid_argument("gen_synthetic: empty spec");

  const int w = spec.image_width, h = spec.image_height, ch = spec.channels;
  const int grid_cols = std::max(1, w / spec.patch);
  const int grid_rows = std::max(1, h / spec.patch);

  // One background texture shared by every sample.
  std::vector<double> background(static_cast<std::size_t>(w) * h * ch);
  {
    std::mt19937_64 rng(spec.background_texture_seed);
    std::uniform_real_distribution<double> u(0.25, 0.75);
    for (auto& v : background) v = u(rng);
  }

  // Per-class cue texture and home patch cell.
  std::vector<std::vector<double>> cues(spec.num_classes);
  std::vector<std::pair<int, int>> homes(spec.num_classes);
  for (int c = 0; c < spec.num_classes; ++c) {
    std::mt19937_64 rng(mix_seed(spec.background_texture_seed, 1000 + c));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    cues[c].resize(static_cast<std::size_t>(spec.cue_size) * spec.cue_size * ch);
    for (auto& v : cues[c]) v = u(rng) < 0.5 ? 0.0 : 1.0;
    homes[c] = {(c % grid_cols), (c / grid_cols) % grid_rows};
  }

  Dataset ds;
  for (int c = 0; c < spec.num_classes; ++c) {
    const int n_train =
        static_cast<int>(std::lround(spec.samples_per_class * 0.8));
    for (int s = 0; s < spec.samples_per_class; ++s) {
      std::mt19937_64 rng(mix_seed(seed, static_cast<unsigned long long>(c) *
                                             spec.samples_per_class + s));
      std::uniform_int_distribution<int> jitter(-1, 1);
      int cell_x = homes[c].first + jitter(rng);
      int cell_y = homes[c].second + jitter(rng);
      cell_x = std::min(grid_cols - 1, std::max(0, cell_x));
      cell_y = std::min(grid_rows - 1, std::max(0, cell_y));
      int x0 = std::min(cell_x * spec.patch, w - spec.cue_size);
      int y0 = std::min(cell_y * spec.patch, h - spec.cue_size);

      ImageSample img;
      img.width = w;
      img.height = h;
      img.channels = ch;
      img.label = c;
      img.pixels.resize(background.size());
      for (std::size_t i = 0; i < background.size(); ++i)
        img.pixels[i] = quantize(background[i]);
      const double a = spec.cue_contrast;
      for (int y = 0; y < spec.cue_size; ++y)
        for (int x = 0; x < spec.cue_size; ++x)
          for (int k = 0; k < ch; ++k) {
            const std::size_t pi =
                (static_cast<std::size_t>(y0 + y) * w + (x0 + x)) * ch + k;
            const double cue = cues[c][(static_cast<std::size_t>(y) * spec.cue_size + x) * ch + k];
            img.pixels[pi] = quantize((1.0 - a) * background[pi] + a * cue);
          }
      (s < n_train ? ds.train : ds.test).push_back(std::move(img));
    }
  }
  return ds;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.tsv", std::ios::binary);
  if (!manifest) throw std::runtime_error("write_dataset: cannot write manifest");
  auto dump = [&](const std::vector<ImageSample>& split, const char* name) {
    for (std::size_t i = 0; i < split.size(); ++i) {
      const auto& img = split[i];
      std::ostringstream fname;
      fname << name << "_c" << img.label << "_" << i
            << (img.channels == 1 ? ".pgm" : ".ppm");
      write_pnm((fs::path(dir) / fname.str()).string(), img);
      manifest << fname.str() << "\t" << img.label << "\t" << name << "\n";
    }
  };
  dump(ds.train, "train");
  dump(ds.test, "test");
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.tsv", std::ios::binary);
  if (!manifest)
    throw std::runtime_error("load_dataset: missing manifest.tsv in " + dir);
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string path, label, split;
    if (!std::getline(ss, path, '\t') || !std::getline(ss, label, '\t') ||
        !std::getline(ss, split, '\t'))
      throw std::runtime_error("load_dataset: malformed manifest line " +
                               std::to_string(lineno));
    ImageSample img = read_pnm((fs::path(dir) / path).string());
    img.label = std::stoi(label);
    if (split == "train")
      ds.train.push_back(std::move(img));
    else if (split == "test")
      ds.test.push_back(std::move(img));
    else
      throw std::runtime_error("load_dataset: unknown split '" + split + "'");
  }
  return ds;
}

}  // namespace dcal
