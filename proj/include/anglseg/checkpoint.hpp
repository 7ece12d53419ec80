#pragma once

#include "anglseg/optim.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace anglseg {

/// Named-tensor archive: "ANGW", u32 version, u32 count, then per tensor
/// u32 name length, UTF-8 name, u32 rank, u32 dims, little-endian f32 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace anglseg
