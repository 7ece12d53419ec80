#include "anglseg/checkpoint.hpp"

#include "binary_io.hpp"

#include <fstream>
#include <iterator>

namespace anglseg {

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out = "ANGW";
  binary::put_u32(out, kCheckpointVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    binary::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    binary::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) binary::put_u32(out, static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < t.values().size(); ++i) binary::put_f32(out, t.values()[i]);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  binary::Reader in(bytes, "checkpoint");
  if (in.take(4) != "ANGW") throw CheckpointError("checkpoint: bad magic (expected ANGW)");
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = in.u32();
  std::vector<NamedTensor> out;
  out.reserve(count);
  try {
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto len = in.u32();
      std::string name(in.take(len));
      const auto rank = in.u32();
      Shape shape(rank);
      for (auto& d : shape) d = in.u32();
      Tensor::Array values(static_cast<Eigen::Index>(shape_numel(shape)));
      for (Eigen::Index j = 0; j < values.size(); ++j) values[j] = in.f32();
      out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
    }
  } catch (const std::runtime_error& e) {
    throw CheckpointError(e.what());
  }
  if (!in.done()) throw CheckpointError("checkpoint: trailing bytes after last tensor");
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  const auto bytes = encode_checkpoint(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed: " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace anglseg
