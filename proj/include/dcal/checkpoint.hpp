#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dcal/config.hpp"
#include "dcal/model.hpp"
#include "dcal/tensor.hpp"

namespace dcal {

// Single-file, little-endian container:
//   magic "DCAL" | version u32 (=1) | tensor_count u32
//   per tensor: name_len u16, name bytes, rank u8, dims u64 each, f32 payload
//   config block: byte length u32, UTF-8 key=value text
enum class CkptError {
  bad_magic,
  bad_version,
  truncated,
  shape_mismatch,
  io,
};

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CkptError code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  CkptError code() const { return code_; }

 private:
  CkptError code_;
};

struct CheckpointData {
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  std::string config_text;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

void save_checkpoint_raw(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint_raw(const std::string& path);

// Model-level wrappers: tensors are the named parameters, the config block
// is the serialized RunConfig. Loading validates every parameter against
// the shapes the config implies.
void save_checkpoint(const std::string& path, const DcalParams<float>& params,
                     const RunConfig& cfg);
std::pair<DcalParams<float>, RunConfig> load_checkpoint(const std::string& path);

// Fills `params` (already shaped per cfg) from a raw checkpoint.
void fill_params_from(const CheckpointData& data, DcalParams<float>& params);

}  // namespace dcal
