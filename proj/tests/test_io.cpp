#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "dcal/attention_export.hpp"
#include "dcal/checkpoint.hpp"
#include "dcal/config.hpp"
#include "dcal/pnm.hpp"
#include "doctest.h"

using namespace dcal;

namespace {

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

RunConfig sample_cfg() {
  RunConfig cfg;
  cfg.model.depth = 2;
  cfg.model.pwca_depth = 2;
  cfg.model.dim = 8;
  cfg.model.heads = 2;
  cfg.model.patch = 8;
  cfg.model.num_classes = 3;
  cfg.model.image_width = 16;
  cfg.model.image_height = 16;
  cfg.model.ratio = 0.5;
  cfg.hyper.seed = 11;
  cfg.samples_per_class = 4;
  return cfg;
}

}  // namespace

TEST_CASE("pnm: P5 round trip is bitwise on the quantized grid") {
  ImageSample img;
  img.width = 4;
  img.height = 3;
  img.channels = 1;
  for (int i = 0; i < 12; ++i) img.pixels.push_back(static_cast<float>(i * 20) / 255.0f);
  write_pnm("tmp_rt.pgm", img);
  auto back = read_pnm("tmp_rt.pgm");
  CHECK(back.width == 4);
  CHECK(back.height == 3);
  CHECK(back.channels == 1);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("pnm: P6 carries three channels") {
  ImageSample img;
  img.width = 2;
  img.height = 2;
  img.channels = 3;
  for (int i = 0; i < 12; ++i) img.pixels.push_back(static_cast<float>(i) / 255.0f);
  write_pnm("tmp_rt.ppm", img);
  auto back = read_pnm("tmp_rt.ppm");
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);
  CHECK_THROWS(read_pnm("tmp_missing_file.pgm"));
}

TEST_CASE("checkpoint raw round trip is bitwise") {
  CheckpointData data;
  data.tensors.emplace_back("a", Tensor<float>::from_data({2, 3}, {1, 2, 3, 4, 5, 6}));
  data.tensors.emplace_back("b.long_name", Tensor<float>::from_data({4}, {9, 8, 7, 6}));
  data.config_text = "k = v\n";
  save_checkpoint_raw("tmp_raw.ckpt", data);
  auto back = load_checkpoint_raw("tmp_raw.ckpt");
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].first == "a");
  CHECK(back.tensors[0].second.rows() == 2);
  CHECK(back.tensors[0].second.data() == data.tensors[0].second.data());
  CHECK(back.tensors[1].second.data() == data.tensors[1].second.data());
  CHECK(back.config_text == "k = v\n");
  // Write twice: identical bytes (format is fully deterministic).
  save_checkpoint_raw("tmp_raw2.ckpt", data);
  CHECK(slurp("tmp_raw.ckpt") == slurp("tmp_raw2.ckpt"));
}

TEST_CASE("checkpoint header starts with the magic and version 1") {
  CheckpointData data;
  data.tensors.emplace_back("t", Tensor<float>::from_data({1}, {0.5f}));
  save_checkpoint_raw("tmp_hdr.ckpt", data);
  auto bytes = slurp("tmp_hdr.ckpt");
  REQUIRE(bytes.size() >= 12);
  CHECK(bytes[0] == 'D');
  CHECK(bytes[1] == 'C');
  CHECK(bytes[2] == 'A');
  CHECK(bytes[3] == 'L');
  CHECK(bytes[4] == 1);  // version u32, little-endian
  CHECK(bytes[5] == 0);
  CHECK(bytes[8] == 1);  // tensor count
}

TEST_CASE("checkpoint errors carry distinct codes") {
  CheckpointData data;
  data.tensors.emplace_back("t", Tensor<float>::from_data({2}, {1, 2}));
  save_checkpoint_raw("tmp_err.ckpt", data);
  auto good = slurp("tmp_err.ckpt");

  auto expect_code = [](const std::string& path, CkptError want) {
    try {
      load_checkpoint_raw(path);
      FAIL("expected a CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.code() == want);
    }
  };

  auto bad = good;
  bad[0] = 'X';
  spit("tmp_bad_magic.ckpt", bad);
  expect_code("tmp_bad_magic.ckpt", CkptError::bad_magic);

  bad = good;
  bad[4] = 9;
  spit("tmp_bad_version.ckpt", bad);
  expect_code("tmp_bad_version.ckpt", CkptError::bad_version);

  bad = good;
  bad.resize(bad.size() - 5);
  spit("tmp_truncated.ckpt", bad);
  expect_code("tmp_truncated.ckpt", CkptError::truncated);

  expect_code("tmp_does_not_exist.ckpt", CkptError::io);
}

TEST_CASE("model checkpoint round trip restores every parameter") {
  auto cfg = sample_cfg();
  auto params = init_params<float>(cfg.model, cfg.hyper.seed);
  save_checkpoint("tmp_model.ckpt", params, cfg);
  auto [back, cfg2] = load_checkpoint("tmp_model.ckpt");
  auto a = params.named(), b = back.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second.data() == b[i].second.data());
  }
  CHECK(cfg2.model.depth == cfg.model.depth);
  CHECK(cfg2.model.num_classes == cfg.model.num_classes);
  CHECK(cfg2.hyper.seed == cfg.hyper.seed);
}

TEST_CASE("loading a checkpoint with a reshaped tensor is a shape error") {
  auto cfg = sample_cfg();
  auto params = init_params<float>(cfg.model, 1);
  save_checkpoint("tmp_shape.ckpt", params, cfg);
  auto data = load_checkpoint_raw("tmp_shape.ckpt");
  for (auto& [name, t] : data.tensors)
    if (name == "embed.cls") t = Tensor<float>({2, cfg.model.dim});
  save_checkpoint_raw("tmp_shape.ckpt", data);
  try {
    load_checkpoint("tmp_shape.ckpt");
    FAIL("expected a shape error");
  } catch (const CheckpointError& e) {
    CHECK(e.code() == CkptError::shape_mismatch);
  }
}

TEST_CASE("config: serialize then parse is the identity") {
  auto cfg = sample_cfg();
  cfg.model.task = Task::retrieval;
  cfg.model.glca_depth = 1;
  cfg.hyper.optimizer = OptimizerKind::sgd;
  cfg.hyper.base_lr = 0.00123456789;
  cfg.cue_contrast = 0.65;
  auto text = serialize_config(cfg);
  auto back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.model.task == Task::retrieval);
  CHECK(back.model.glca_depth == 1);
  CHECK(back.hyper.optimizer == OptimizerKind::sgd);
  CHECK(back.hyper.base_lr == cfg.hyper.base_lr);
  CHECK(back.cue_contrast == cfg.cue_contrast);
}

TEST_CASE("config: comments and blank lines are ignored, unknown keys rejected") {
  auto base = parse_config("# comment line\n\nL = 4\n  D = 16 # trailing\nH = 2\n");
  CHECK(base.model.depth == 4);
  CHECK(base.model.dim == 16);
  CHECK_THROWS_AS(parse_config("bogus_key = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("L\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("task = dancing\n"), std::invalid_argument);
}

TEST_CASE("export_attention_map: normalization and sidecar") {
  std::vector<double> resp{0.0, 0.5, 1.0, 0.25};
  export_attention_map(resp, 2, 2, 0.5, "tmp_attn.pgm");
  auto bytes = slurp("tmp_attn.pgm");
  // Header "P5\n2 2\n255\n" then 4 payload bytes.
  REQUIRE(bytes.size() >= 4);
  std::string head(bytes.begin(), bytes.begin() + 3);
  CHECK(head == "P5\n");
  const unsigned char* px =
      reinterpret_cast<const unsigned char*>(bytes.data() + bytes.size() - 4);
  CHECK(px[0] == 0);
  CHECK(px[1] == 128);
  CHECK(px[2] == 255);
  CHECK(px[3] == 64);

  std::ifstream side("tmp_attn.pgm.sel.txt");
  REQUIRE(side.good());
  std::string l1, l2;
  std::getline(side, l1);
  std::getline(side, l2);
  // k = 2: patches 2 (row 1, col 0) then 1 (row 0, col 1).
  CHECK(l1 == "patch 1 0");
  CHECK(l2 == "patch 0 1");
}

TEST_CASE("export_attention_map: degenerate constant map") {
  std::vector<double> resp{0.3, 0.3, 0.3, 0.3};
  export_attention_map(resp, 2, 2, 0.25, "tmp_flat.pgm");
  auto bytes = slurp("tmp_flat.pgm");
  for (std::size_t i = bytes.size() - 4; i < bytes.size(); ++i)
    CHECK(bytes[i] == 0);
  std::ifstream side("tmp_flat.pgm.sel.txt");
  std::string l1;
  std::getline(side, l1);
  CHECK(l1 == "degenerate 1");
}

TEST_CASE("export_attention_map validates the grid") {
  CHECK_THROWS_AS(export_attention_map({0.1, 0.2, 0.3}, 2, 2, 0.5, "tmp_bad.pgm"),
                  std::invalid_argument);
}
