#include "bgn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bgn/errors.hpp"

namespace bgn {

using nlohmann::json;

Mask mask_from(const std::vector<std::uint8_t>& bits) { return Mask(bits); }

namespace {

int question_length(const SceneRecord& rec) {
  int n = 0;
  for (auto b : rec.q_mask) n += b != 0;
  return n;
}

ModelConfig model_config_for(const Config& cfg, const DatasetHeader& header) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(header.vocab.size());
  mc.answer_count = static_cast<int>(header.answers.size());
  mc.max_words = header.m;
  mc.max_objects = header.n_max;
  mc.d_raw = header.d_raw;
  if (mc.d_obj <= 0) mc.d_obj = mc.d_raw;
  return mc;
}

double record_loss_and_backprop(const Model& model, const SceneRecord& rec,
                                const std::vector<std::string>& answers,
                                double inv_batch, const DropoutCfg& drop) {
  Tape tape;
  TapeScope scope(tape);
  Tensor scores =
      model.forward_scores(rec.token_ids, mask_from(rec.q_mask), rec.features,
                           mask_from(rec.v_mask), drop);
  Tensor targets = Tensor::col(soft_targets(rec.answer_counts, answers));
  Tensor loss = bce_with_logits(scores, targets);
  Tensor scaled = scale(loss, inv_batch);
  backward(scaled);
  return loss.data()[0];
}

}  // namespace

EvalReport evaluate(const Model& model, const Dataset& data) {
  EvalReport report;
  report.variant = to_string(model.config().variant);
  report.layers = model.config().layers;
  report.record_count = static_cast<int>(data.records.size());
  double total = 0.0;
  for (const auto& rec : data.records) {
    Tensor scores =
        model.forward_scores(rec.token_ids, mask_from(rec.q_mask),
                             rec.features, mask_from(rec.v_mask));
    const int pred = predict(scores);
    const std::vector<double> y =
        soft_targets(rec.answer_counts, data.header.answers);
    const double score = y[pred];
    total += score;
    auto& hop = report.per_hop[rec.hops];
    hop.count += 1;
    hop.score_sum += score;
    auto& len = report.per_length[question_length(rec)];
    len.count += 1;
    len.score_sum += score;
  }
  report.overall = report.record_count ? total / report.record_count : 0.0;
  return report;
}

double EvalReport::hop_subset_accuracy(const std::vector<int>& hops) const {
  int count = 0;
  double sum = 0.0;
  for (int h : hops) {
    auto it = per_hop.find(h);
    if (it == per_hop.end()) continue;
    count += it->second.count;
    sum += it->second.score_sum;
  }
  return count ? sum / count : 0.0;
}

std::string EvalReport::to_json() const {
  json j;
  j["overall"] = overall;
  j["record_count"] = record_count;
  j["variant"] = variant;
  j["layers"] = layers;
  json hops = json::object();
  for (const auto& [h, b] : per_hop) {
    hops[std::to_string(h)] = {{"count", b.count}, {"accuracy", b.accuracy()}};
  }
  j["per_hop"] = hops;
  json lens = json::object();
  for (const auto& [l, b] : per_length) {
    lens[std::to_string(l)] = {{"count", b.count}, {"accuracy", b.accuracy()}};
  }
  j["per_length"] = lens;
  return j.dump();
}

std::string EvalReport::to_table() const {
  std::ostringstream o;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "variant=%s L=%d records=%d overall=%.4f\n",
                variant.c_str(), layers, record_count, overall);
  o << buf;
  for (const auto& [h, b] : per_hop) {
    std::snprintf(buf, sizeof(buf), "  hop %d: n=%-5d acc=%.4f\n", h, b.count,
                  b.accuracy());
    o << buf;
  }
  for (const auto& [l, b] : per_length) {
    std::snprintf(buf, sizeof(buf), "  len %2d: n=%-5d acc=%.4f\n", l, b.count,
                  b.accuracy());
    o << buf;
  }
  return o.str();
}

Checkpoint make_checkpoint(const Config& cfg, const Model& model,
                           const Adamax& opt, int epoch,
                           double best_val_accuracy,
                           const std::vector<EpochMetrics>& history) {
  Checkpoint c;
  Config stored = cfg;
  stored.model = model.config();  // pick up data-derived dims
  c.config_text = stored.to_string();
  c.vocab.clear();
  c.answers.clear();
  c.epoch = epoch;
  c.seed = cfg.seed;
  c.opt_step = opt.step_count();
  c.best_val_accuracy = best_val_accuracy;
  c.history = history;
  for (const auto& item : model.params().items()) {
    c.tensors.push_back({item.name, item.tensor.rows(), item.tensor.cols(),
                         item.tensor.values()});
  }
  const auto& m = opt.m_buffers();
  const auto& u = opt.u_buffers();
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& item = model.params().items()[i];
    c.opt_m.push_back({item.name, item.tensor.rows(), item.tensor.cols(), m[i]});
    c.opt_u.push_back({item.name, item.tensor.rows(), item.tensor.cols(), u[i]});
  }
  return c;
}

RestoredModel restore_model(const Checkpoint& ckpt) {
  RestoredModel r;
  r.config = Config::from_string(ckpt.config_text);
  ModelConfig mc = r.config.model;
  mc.vocab_size = static_cast<int>(ckpt.vocab.size());
  mc.answer_count = static_cast<int>(ckpt.answers.size());
  r.model = std::make_unique<Model>(mc, r.config.seed);
  auto& items = r.model->params().items();
  if (items.size() != ckpt.tensors.size()) {
    throw DataError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                    " tensors, model expects " + std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& t = ckpt.tensors[i];
    if (t.name != items[i].name ||
        t.data.size() != items[i].tensor.numel()) {
      throw DataError("checkpoint tensor '" + t.name +
                      "' does not match model parameter '" + items[i].name +
                      "'");
    }
    std::copy(t.data.begin(), t.data.end(), items[i].tensor.data());
  }
  r.adamax = r.config.adamax;
  r.opt_step = ckpt.opt_step;
  for (const auto& t : ckpt.opt_m) r.opt_m.push_back(t.data);
  for (const auto& t : ckpt.opt_u) r.opt_u.push_back(t.data);
  return r;
}

void check_vocab(const Checkpoint& ckpt, const DatasetHeader& header) {
  if (ckpt.vocab != header.vocab || ckpt.answers != header.answers) {
    throw DataError(
        "vocabulary mismatch between checkpoint and dataset");
  }
}

namespace {

TrainResult train_loop(const Config& cfg, Model& model, Adamax& opt,
                       int start_epoch, double best_val,
                       std::vector<EpochMetrics> history, const Dataset& train,
                       const Dataset& val, std::ostream* log,
                       const std::function<void(const Checkpoint&, bool)>&
                           on_epoch_checkpoint,
                       const Checkpoint* incoming) {
  TrainResult result;
  result.best_val_accuracy = best_val;
  result.history = std::move(history);
  Checkpoint best_ckpt;
  bool have_best = false;
  if (incoming) {
    result.final_checkpoint = *incoming;
    result.best_checkpoint = *incoming;
  }

  const auto& answers = train.header.answers;
  std::vector<int> order(train.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, cfg.schedule);
    Rng shuffle_rng(Rng::mix(cfg.seed, 2 * epoch));
    Rng drop_rng(Rng::mix(cfg.seed, 2 * epoch + 1));
    // Fisher-Yates over the record order.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    }

    double loss_sum = 0.0;
    std::size_t seen = 0;
    while (seen < order.size()) {
      const std::size_t batch_end =
          std::min(seen + static_cast<std::size_t>(cfg.batch_size),
                   order.size());
      const double inv_batch = 1.0 / static_cast<double>(batch_end - seen);
      model.params().zero_grad();
      for (std::size_t i = seen; i < batch_end; ++i) {
        DropoutCfg drop{cfg.model.dropout_p, true, &drop_rng};
        const double loss = record_loss_and_backprop(
            model, train.records[order[i]], answers, inv_batch, drop);
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite loss at epoch " +
                             std::to_string(epoch));
        }
        loss_sum += loss;
      }
      opt.step(model.params(), lr);
      seen = batch_end;
    }

    const EvalReport val_report = evaluate(model, val);
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.lr = lr;
    metrics.train_loss = loss_sum / static_cast<double>(order.size());
    metrics.val_accuracy = val_report.overall;
    result.history.push_back(metrics);

    if (log) {
      json j;
      j["epoch"] = epoch;
      j["lr"] = lr;
      j["loss"] = metrics.train_loss;
      j["val_accuracy"] = metrics.val_accuracy;
      (*log) << j.dump() << "\n" << std::flush;
    }

    Checkpoint ckpt = make_checkpoint(cfg, model, opt, epoch,
                                      std::max(result.best_val_accuracy,
                                               metrics.val_accuracy),
                                      result.history);
    ckpt.vocab = train.header.vocab;
    ckpt.answers = train.header.answers;
    const bool improved = metrics.val_accuracy > result.best_val_accuracy;
    if (improved) {
      result.best_val_accuracy = metrics.val_accuracy;
      best_ckpt = ckpt;
      have_best = true;
    }
    result.final_checkpoint = ckpt;
    if (on_epoch_checkpoint) on_epoch_checkpoint(ckpt, improved);
  }
  if (have_best) {
    result.best_checkpoint = best_ckpt;
  } else if (!incoming) {
    result.best_checkpoint = result.final_checkpoint;
  }
  return result;
}

}  // namespace

TrainResult train_model(const Config& cfg, const Dataset& train,
                        const Dataset& val, std::ostream* log,
                        const std::function<void(const Checkpoint&, bool)>&
                            on_epoch_checkpoint) {
  if (cfg.epochs < 1) throw UsageError("epochs must be >= 1");
  Model model(model_config_for(cfg, train.header), cfg.seed);
  Adamax opt(cfg.adamax);
  return train_loop(cfg, model, opt, 1, -1.0, {}, train, val, log,
                    on_epoch_checkpoint, nullptr);
}

TrainResult resume_training(const Checkpoint& ckpt, const Config& cli_cfg,
                            const Dataset& train, const Dataset& val,
                            std::ostream* log,
                            const std::function<void(const Checkpoint&, bool)>&
                                on_epoch_checkpoint) {
  check_vocab(ckpt, train.header);
  RestoredModel restored = restore_model(ckpt);
  Config cfg = restored.config;  // checkpoint config wins on resume
  cfg.epochs = std::max(cli_cfg.epochs, cfg.epochs);
  Adamax opt(restored.adamax);
  opt.m_buffers() = restored.opt_m;
  opt.u_buffers() = restored.opt_u;
  opt.set_step_count(restored.opt_step);
  return train_loop(cfg, *restored.model, opt, ckpt.epoch + 1,
                    ckpt.best_val_accuracy, ckpt.history, train, val, log,
                    on_epoch_checkpoint, &ckpt);
}

const AblationCell* AblationResult::find(const std::string& variant,
                                         int layers) const {
  for (const auto& c : cells) {
    if (c.variant == variant && c.layers == layers) return &c;
  }
  return nullptr;
}

std::string AblationResult::to_table() const {
  std::ostringstream o;
  o << "variant layers mean_overall mean_hop23 per_seed_overall\n";
  char buf[200];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof(buf), "%-7s %-6d %-12.4f %-10.4f",
                  c.variant.c_str(), c.layers, c.mean_overall, c.mean_hop23);
    o << buf;
    for (const auto& r : c.per_seed) {
      std::snprintf(buf, sizeof(buf), " %.4f", r.overall);
      o << buf;
    }
    o << "\n";
  }
  return o.str();
}

std::string AblationResult::to_json() const {
  json j;
  json cell_list = json::array();
  for (const auto& c : cells) {
    json jc;
    jc["variant"] = c.variant;
    jc["layers"] = c.layers;
    jc["mean_overall"] = c.mean_overall;
    jc["mean_hop23"] = c.mean_hop23;
    json per_seed = json::array();
    for (std::size_t i = 0; i < c.per_seed.size(); ++i) {
      per_seed.push_back(json::parse(c.per_seed[i].to_json()));
      per_seed.back()["seed"] = c.seeds[i];
    }
    jc["per_seed"] = per_seed;
    cell_list.push_back(jc);
  }
  j["cells"] = cell_list;

  // Per-hop deltas between stacked and single-layer BGN, when both ran.
  const AblationCell* bgn3 = find("bgn", 3);
  const AblationCell* bgn1 = find("bgn", 1);
  if (bgn3 && bgn1) {
    json deltas = json::object();
    for (int hop = 1; hop <= 3; ++hop) {
      double a3 = 0.0, a1 = 0.0;
      for (const auto& r : bgn3->per_seed)
        a3 += r.hop_subset_accuracy({hop});
      for (const auto& r : bgn1->per_seed)
        a1 += r.hop_subset_accuracy({hop});
      a3 /= bgn3->per_seed.empty() ? 1 : bgn3->per_seed.size();
      a1 /= bgn1->per_seed.empty() ? 1 : bgn1->per_seed.size();
      deltas[std::to_string(hop)] = a3 - a1;
    }
    j["bgn_l3_minus_l1_per_hop"] = deltas;
  }

  // Per-seed direction of the bilinear-vs-SDP comparison at L=2.
  const AblationCell* bgn2 = find("bgn", 2);
  const AblationCell* sdp2 = find("sdp", 2);
  if (bgn2 && sdp2 && bgn2->per_seed.size() == sdp2->per_seed.size()) {
    json violations = json::array();
    for (std::size_t i = 0; i < bgn2->per_seed.size(); ++i) {
      if (bgn2->per_seed[i].overall < sdp2->per_seed[i].overall) {
        json v;
        v["seed"] = bgn2->seeds[i];
        v["bgn_overall"] = bgn2->per_seed[i].overall;
        v["sdp_overall"] = sdp2->per_seed[i].overall;
        violations.push_back(v);
      }
    }
    j["sdp_direction_violations"] = violations;
  }
  return j.dump(2);
}

AblationResult run_ablation(
    const Config& base, const Dataset& train, const Dataset& val,
    const std::vector<std::pair<std::string, int>>& cells,
    const std::vector<std::uint64_t>& seeds, int max_workers,
    std::ostream* log) {
  struct Task {
    std::size_t cell;
    std::size_t seed_idx;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t s = 0; s < seeds.size(); ++s) tasks.push_back({c, s});
  }

  AblationResult result;
  result.cells.resize(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    result.cells[c].variant = cells[c].first;
    result.cells[c].layers = cells[c].second;
    result.cells[c].seeds = seeds;
    result.cells[c].per_seed.resize(seeds.size());
  }

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const Task& task = tasks[t];
      Config cfg = base;
      cfg.model.variant = variant_from_string(cells[task.cell].first);
      cfg.model.layers = cells[task.cell].second;
      cfg.seed = seeds[task.seed_idx];
      TrainResult tr = train_model(cfg, train, val);
      RestoredModel restored = restore_model(tr.best_checkpoint);
      EvalReport report = evaluate(*restored.model, val);
      result.cells[task.cell].per_seed[task.seed_idx] = report;
      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        (*log) << "[ablate] " << cells[task.cell].first << " L="
               << cells[task.cell].second << " seed=" << seeds[task.seed_idx]
               << " overall=" << report.overall << "\n"
               << std::flush;
      }
    }
  };

  const int workers = std::max(
      1, std::min<int>(max_workers, static_cast<int>(tasks.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (auto& cell : result.cells) {
    double overall = 0.0, hop23 = 0.0;
    for (const auto& r : cell.per_seed) {
      overall += r.overall;
      hop23 += r.hop_subset_accuracy({2, 3});
    }
    const double n = cell.per_seed.empty() ? 1.0 : cell.per_seed.size();
    cell.mean_overall = overall / n;
    cell.mean_hop23 = hop23 / n;
  }
  return result;
}

}  // namespace bgn
