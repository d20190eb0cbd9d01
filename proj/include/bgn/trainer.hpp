#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "bgn/checkpoint.hpp"
#include "bgn/config.hpp"
#include "bgn/model.hpp"
#include "bgn/optim.hpp"
#include "bgn/synth.hpp"

namespace bgn {

Mask mask_from(const std::vector<std::uint8_t>& bits);

struct EvalBucket {
  int count = 0;
  double score_sum = 0.0;
  double accuracy() const { return count ? score_sum / count : 0.0; }
};

// Soft-accuracy report: a prediction scores its soft target value.
struct EvalReport {
  double overall = 0.0;
  std::map<int, EvalBucket> per_hop;
  std::map<int, EvalBucket> per_length;  // keyed by unpadded word count
  int record_count = 0;
  std::string variant;
  int layers = 0;

  std::string to_json() const;
  std::string to_table() const;

  double hop_subset_accuracy(const std::vector<int>& hops) const;
};

EvalReport evaluate(const Model& model, const Dataset& data);

struct TrainResult {
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;
  double best_val_accuracy = 0.0;
  std::vector<EpochMetrics> history;
};

// Full training run under the config's schedule. Deterministic given
// cfg.seed. Optional jsonl log gets one line per epoch; on_epoch_checkpoint,
// when set, receives the latest checkpoint after every epoch (the CLI uses
// it to keep the last good state on disk).
TrainResult train_model(
    const Config& cfg, const Dataset& train, const Dataset& val,
    std::ostream* log = nullptr,
    const std::function<void(const Checkpoint&, bool /*is_best*/)>&
        on_epoch_checkpoint = {});

// Continues a run from a checkpoint at epoch+1; the checkpoint's embedded
// config wins over `cli_cfg` except for epoch count extensions.
TrainResult resume_training(const Checkpoint& ckpt, const Config& cli_cfg,
                            const Dataset& train, const Dataset& val,
                            std::ostream* log = nullptr,
                            const std::function<void(const Checkpoint&, bool)>&
                                on_epoch_checkpoint = {});

Checkpoint make_checkpoint(const Config& cfg, const Model& model,
                           const Adamax& opt, int epoch,
                           double best_val_accuracy,
                           const std::vector<EpochMetrics>& history);

// Rebuilds the model (and optionally optimizer state) from a checkpoint.
struct RestoredModel {
  Config config;
  std::unique_ptr<Model> model;
  AdamaxConfig adamax;
  std::vector<std::vector<double>> opt_m, opt_u;
  std::int64_t opt_step = 0;
};
RestoredModel restore_model(const Checkpoint& ckpt);

// Dataset/checkpoint compatibility check; throws DataError on mismatch.
void check_vocab(const Checkpoint& ckpt, const DatasetHeader& header);

// One (variant, L) ablation cell over the shared seed set.
struct AblationCell {
  std::string variant;
  int layers = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> per_seed;
  double mean_overall = 0.0;
  double mean_hop23 = 0.0;  // accuracy on the 2-hop + 3-hop subset
};

struct AblationResult {
  std::vector<AblationCell> cells;

  const AblationCell* find(const std::string& variant, int layers) const;
  std::string to_table() const;
  std::string to_json() const;  // includes per-hop deltas and any per-seed
                                // direction violations
};

// Trains cells x seeds (each run single-threaded and deterministic);
// max_workers > 1 runs cells concurrently. Progress lines go to `log`.
AblationResult run_ablation(
    const Config& base, const Dataset& train, const Dataset& val,
    const std::vector<std::pair<std::string, int>>& cells,
    const std::vector<std::uint64_t>& seeds, int max_workers,
    std::ostream* log = nullptr);

}  // namespace bgn
