#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "iogvqa/model.hpp"
#include "iogvqa/optim.hpp"

// Binary container: "IOGV", u32 format_version, u64 header length, JSON header,
// then named float64 tensors, then an FNV-1a checksum of everything before it.

namespace iog {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  TrainingConfig config;
  DataDims dims;
  std::string vocab_fingerprint;
  std::size_t epoch = 0;
  double best_score = 0.0;
  std::vector<NamedTensor> tensors;

  const Matrix* find(const std::string& name) const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// IntegrityError on corruption or truncation, IncompatibleError on a version mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every model parameter.
Checkpoint capture(IogModel& model, const std::string& vocab_fingerprint, std::size_t epoch, double best_score);
void capture_optimizer(const Adam& opt, Checkpoint& ckpt);

/// Copies parameters into `model`. IncompatibleError when shapes or the data
/// dimensions differ from the checkpoint.
void restore(IogModel& model, const Checkpoint& ckpt);
void restore_optimizer(Adam& opt, const Checkpoint& ckpt);

std::unique_ptr<IogModel> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace iog
