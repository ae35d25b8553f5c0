#ifndef DSRGAN_CHECKPOINT_HPP
#define DSRGAN_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include "dsrgan/model.hpp"

namespace dsrgan {

std::uint64_t fnv1a64(const std::string& data);

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
};

// Versioned container: header, then named tensors (name, shape, raw
// little-endian doubles). Parameters, Adam moments and batch-norm running
// statistics all round-trip bit-exactly.
void save_checkpoint(const std::string& path, DsrganModel& model, std::uint64_t config_hash,
                     std::uint64_t step);

CheckpointHeader read_checkpoint_header(const std::string& path);

// Restores model state; throws on version/config-hash mismatch or on any
// missing or unexpected tensor. Returns the stored step.
std::uint64_t load_checkpoint(const std::string& path, DsrganModel& model,
                              std::uint64_t expect_config_hash);

}  // namespace dsrgan

#endif
