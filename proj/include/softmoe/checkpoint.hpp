#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmoe/model.hpp"

namespace softmoe {

// File layout:
//   8 bytes   magic "SOFTMOE\0"
//   1 byte    format version
//   u64 LE    header length H
//   H bytes   JSON header: shape, head, segment table, payload checksum
//   payload   little-endian f64, segments back to back in parameter order
inline constexpr std::uint8_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Reason { Io, BadMagic, Version, Shape, Corrupt };
  CheckpointError(Reason reason, const std::string& msg) : std::runtime_error(msg), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace softmoe
