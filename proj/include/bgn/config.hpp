#pragma once

#include <cstdint>
#include <string>

#include "bgn/model.hpp"
#include "bgn/optim.hpp"
#include "bgn/synth.hpp"

namespace bgn {

// Flat key = value configuration. Desk-scale defaults are active; the
// paper-scale values live next to each key in config.cpp and in the sample
// config the CLI can emit. Unknown keys are errors.
struct Config {
  ModelConfig model;      // vocab_size / answer_count filled from data
  SynthConfig synth;
  Schedule schedule;      // desk-compressed by default, see apply_defaults
  AdamaxConfig adamax;

  int train_records = 5000;
  int val_records = 1000;
  int epochs = 8;
  int batch_size = 32;
  std::uint64_t seed = 1234;

  static Config desk_defaults();

  // Parse `key = value` lines ('#' comments). Throws UsageError naming the
  // first unknown key or unparsable value.
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void apply_line(const std::string& key, const std::string& value);
  std::string to_string() const;  // round-trips through from_string
};

}  // namespace bgn
