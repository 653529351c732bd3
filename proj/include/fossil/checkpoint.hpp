#pragma once

#include <filesystem>

#include "fossil/config.hpp"
#include "fossil/model.hpp"

namespace fossil {

// Layout: 8-byte magic "FSLCKPT1", u64 little-endian header length, a JSON
// header (config, config hash, seed, model dims, tensor names and shapes),
// then every parameter as raw little-endian f64 in declaration order.
void save_checkpoint(const std::filesystem::path& path, const FossilModel& model,
                     const TrainConfig& cfg);

struct Checkpoint {
  TrainConfig config;
  FossilModel model;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fossil
