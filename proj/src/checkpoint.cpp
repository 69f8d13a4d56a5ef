#include "dcal/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace dcal {

namespace {

// All multi-byte fields are written least-significant byte first, so files
// are identical across platforms.
template <typename U>
void put_le(std::ostream& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::istream& in, const std::string& what) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    int c = in.get();
    if (c == EOF)
      throw CheckpointError(CkptError::truncated, "checkpoint: truncated " + what);
    v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_le(out, bits);
}

float get_f32(std::istream& in, const std::string& what) {
  std::uint32_t bits = get_le<std::uint32_t>(in, what);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_checkpoint_raw(const std::string& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CkptError::io, "checkpoint: cannot write " + path);
  out.write("DCAL", 4);
  put_le<std::uint32_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& [name, t] : data.tensors) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(t.shape().size()));
    for (int d : t.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (float v : t.data()) put_f32(out, v);
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.config_text.size()));
  out.write(data.config_text.data(),
            static_cast<std::streamsize>(data.config_text.size()));
  if (!out) throw CheckpointError(CkptError::io, "checkpoint: write failed");
}

CheckpointData load_checkpoint_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CkptError::io, "checkpoint: cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "DCAL", 4) != 0)
    throw CheckpointError(CkptError::bad_magic, "checkpoint: bad magic in " + path);
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != 1)
    throw CheckpointError(CkptError::bad_version,
                          "checkpoint: unsupported version " +
                              std::to_string(version));
  const auto count = get_le<std::uint32_t>(in, "tensor count");

  CheckpointData data;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint16_t>(in, "tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != name_len)
      throw CheckpointError(CkptError::truncated, "checkpoint: truncated name");
    int rank = in.get();
    if (rank == EOF)
      throw CheckpointError(CkptError::truncated,
                            "checkpoint: truncated rank of tensor " + name);
    std::vector<int> shape;
    std::size_t numel = 1;
    for (int r = 0; r < rank; ++r) {
      auto d = get_le<std::uint64_t>(in, "dims of tensor " + name);
      if (d == 0 || d > (1ULL << 31))
        throw CheckpointError(CkptError::shape_mismatch,
                              "checkpoint: invalid dimension in tensor " + name);
      shape.push_back(static_cast<int>(d));
      numel *= static_cast<std::size_t>(d);
    }
    std::vector<float> vals(numel);
    for (std::size_t v = 0; v < numel; ++v)
      vals[v] = get_f32(in, "payload of tensor " + name);
    data.tensors.emplace_back(
        name, Tensor<float>::from_data(std::move(shape), std::move(vals)));
  }
  const auto cfg_len = get_le<std::uint32_t>(in, "config block length");
  data.config_text.resize(cfg_len);
  in.read(data.config_text.data(), cfg_len);
  if (static_cast<std::uint32_t>(in.gcount()) != cfg_len)
    throw CheckpointError(CkptError::truncated, "checkpoint: truncated config block");
  return data;
}

void fill_params_from(const CheckpointData& data, DcalParams<float>& params) {
  for (auto& [name, dst] : params.named()) {
    const Tensor<float>* src = data.find(name);
    if (!src)
      throw CheckpointError(CkptError::shape_mismatch,
                            "checkpoint: missing tensor " + name);
    if (src->shape() != dst.shape())
      throw CheckpointError(CkptError::shape_mismatch,
                            "checkpoint: tensor " + name + " has shape " +
                                src->shape_str() + ", expected " + dst.shape_str());
    dst.data() = src->data();
  }
}

void save_checkpoint(const std::string& path, const DcalParams<float>& params,
                     const RunConfig& cfg) {
  CheckpointData data;
  data.tensors = params.named();
  data.config_text = serialize_config(cfg);
  save_checkpoint_raw(path, data);
}

std::pair<DcalParams<float>, RunConfig> load_checkpoint(const std::string& path) {
  CheckpointData data = load_checkpoint_raw(path);
  RunConfig cfg = parse_config(data.config_text);
  DcalParams<float> params = init_params<float>(cfg.model, 0);
  fill_params_from(data, params);
  return {std::move(params), cfg};
}

}  // namespace dcal
