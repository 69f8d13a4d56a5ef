#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dcal/ops.hpp"
#include "dcal/tensor.hpp"

namespace dcal {

struct ImageSample {
  int width = 0;
  int height = 0;
  int channels = 1;              // 1 (grayscale) or 3 (RGB)
  std::vector<float> pixels;     // row-major (row, col, channel), values in [0,1]
  int label = 0;
};

template <typename T>
struct TokenSequence {
  Tensor<T> tokens;  // (N+1) x D, row 0 is the class token
  int grid_rows = 0;
  int grid_cols = 0;
  int patch_count() const { return grid_rows * grid_cols; }
};

// Split an image into non-overlapping P x P patches, row-major over the
// patch grid, each patch flattened row-major as (row, col, channel).
template <typename T>
Tensor<T> patchify(const ImageSample& img, int patch) {
  if (patch <= 0) throw std::invalid_argument("patchify: patch size must be positive");
  if (img.width % patch != 0 || img.height % patch != 0)
    throw std::invalid_argument("patchify: image " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) +
                                " not divisible by patch size " + std::to_string(patch));
  if (img.pixels.size() !=
      static_cast<std::size_t>(img.width) * img.height * img.channels)
    throw std::invalid_argument("patchify: pixel buffer does not match dimensions");

  const int grid_rows = img.height / patch;
  const int grid_cols = img.width / patch;
  const int n = grid_rows * grid_cols;
  const int p_dim = patch * patch * img.channels;
  Tensor<T> out({n, p_dim});
  for (int gr = 0; gr < grid_rows; ++gr)
    for (int gc = 0; gc < grid_cols; ++gc) {
      const int row = gr * grid_cols + gc;
      int k = 0;
      for (int pr = 0; pr < patch; ++pr)
        for (int pc = 0; pc < patch; ++pc)
          for (int ch = 0; ch < img.channels; ++ch)
            out.at(row, k++) = static_cast<T>(
                img.pixels[((gr * patch + pr) * img.width + gc * patch + pc) *
                               img.channels +
                           ch]);
    }
  return out;
}

// Inverse of patchify; test and visualization helper.
template <typename T>
std::vector<float> unpatchify(const Tensor<T>& patches, int grid_rows, int grid_cols,
                              int patch, int channels) {
  const int width = grid_cols * patch;
  std::vector<float> pixels(static_cast<std::size_t>(grid_rows * patch) * width *
                            channels);
  for (int gr = 0; gr < grid_rows; ++gr)
    for (int gc = 0; gc < grid_cols; ++gc) {
      const int row = gr * grid_cols + gc;
      int k = 0;
      for (int pr = 0; pr < patch; ++pr)
        for (int pc = 0; pc < patch; ++pc)
          for (int ch = 0; ch < channels; ++ch)
            pixels[((gr * patch + pr) * width + gc * patch + pc) * channels + ch] =
                static_cast<float>(patches.at(row, k++));
    }
  return pixels;
}

// X = concat(cls, patches * W_proj) + pos.
template <typename T>
TokenSequence<T> embed_tokens(const Tensor<T>& patches, const Tensor<T>& w_proj,
                              const Tensor<T>& cls, const Tensor<T>& pos,
                              int grid_rows, int grid_cols) {
  if (patches.cols() != w_proj.rows())
    throw std::invalid_argument("embed_tokens: patch width " + patches.shape_str() +
                                " does not match projection " + w_proj.shape_str());
  const int d = w_proj.cols();
  if (cls.rows() != 1 || cls.cols() != d)
    throw std::invalid_argument("embed_tokens: class token must be [1x" +
                                std::to_string(d) + "], got " + cls.shape_str());
  if (pos.rows() != patches.rows() + 1 || pos.cols() != d)
    throw std::invalid_argument("embed_tokens: position table " + pos.shape_str() +
                                " does not match token count " +
                                std::to_string(patches.rows() + 1));
  TokenSequence<T> seq;
  seq.tokens = add(concat_rows<T>({cls, matmul(patches, w_proj)}), pos);
  seq.grid_rows = grid_rows;
  seq.grid_cols = grid_cols;
  return seq;
}

}  // namespace dcal
