#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bgn/config.hpp"

namespace bgn {

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

// Self-describing binary container: config text blob, named tensors with
// shape headers (parameters then optimizer buffers), and run state.
// Round-trips bit-exactly on one machine; cross-architecture bit-exactness
// is not claimed.
struct Checkpoint {
  std::uint32_t format_version = 1;
  std::string config_text;
  std::vector<std::string> vocab;    // question words, from the dataset
  std::vector<std::string> answers;  // answer list, from the dataset
  int epoch = 0;  // last completed epoch
  std::uint64_t seed = 0;
  std::int64_t opt_step = 0;
  double best_val_accuracy = 0.0;

  struct NamedTensor {
    std::string name;
    int rows = 0, cols = 0;
    std::vector<double> data;
  };
  std::vector<NamedTensor> tensors;      // model parameters
  std::vector<NamedTensor> opt_m;        // Adamax first moments
  std::vector<NamedTensor> opt_u;        // Adamax infinity norms
  std::vector<EpochMetrics> history;

  void save(const std::string& path) const;         // throws DataError
  static Checkpoint load(const std::string& path);  // throws DataError
};

}  // namespace bgn
