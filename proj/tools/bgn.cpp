#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "bgn/errors.hpp"
#include "bgn/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bgn::Config load_config(const std::string& path) {
  return path.empty() ? bgn::Config::desk_defaults()
                      : bgn::Config::from_file(path);
}

bgn::Dataset make_split(const bgn::Config& cfg, std::uint64_t seed, int count,
                        int salt) {
  bgn::Dataset ds;
  ds.header.n_max = cfg.synth.n_max;
  ds.header.m = cfg.synth.max_words;
  ds.header.d_raw = bgn::kSceneFeatureDim;
  ds.header.vocab = bgn::question_vocab();
  ds.header.answers = bgn::answer_vocab();
  ds.records = bgn::build_corpus(cfg.synth, bgn::Rng::mix(seed, salt), count);
  ds.header.count = static_cast<int>(ds.records.size());
  return ds;
}

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 std::int64_t seed_flag) {
  bgn::Config cfg = load_config(config_path);
  const std::uint64_t seed =
      seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : cfg.seed;
  fs::create_directories(out_dir);
  const bgn::Dataset train = make_split(cfg, seed, cfg.train_records, 1);
  const bgn::Dataset val = make_split(cfg, seed, cfg.val_records, 2);
  bgn::write_dataset(train, (fs::path(out_dir) / "train.jsonl").string());
  bgn::write_dataset(val, (fs::path(out_dir) / "val.jsonl").string());
  std::cout << "wrote " << train.records.size() << " train and "
            << val.records.size() << " val records to " << out_dir << "\n";
  return 0;
}

struct DataPair {
  bgn::Dataset train, val;
};

DataPair load_data_dir(const std::string& dir) {
  DataPair d;
  d.train = bgn::load_dataset((fs::path(dir) / "train.jsonl").string());
  d.val = bgn::load_dataset((fs::path(dir) / "val.jsonl").string());
  return d;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_prefix, const std::string& variant,
              int layers, std::int64_t seed, const std::string& resume_path) {
  bgn::Config cfg = load_config(config_path);
  if (!variant.empty()) cfg.model.variant = bgn::variant_from_string(variant);
  if (layers > 0) cfg.model.layers = layers;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);

  DataPair data = load_data_dir(data_dir);
  if (const fs::path parent = fs::path(out_prefix).parent_path();
      !parent.empty()) {
    fs::create_directories(parent);
  }
  const std::string final_path = out_prefix + "-final.ckpt";
  const std::string best_path = out_prefix + "-best.ckpt";
  std::ofstream log(out_prefix + "-train.jsonl");
  if (!log) throw bgn::DataError("cannot open log at '" + out_prefix + "'");

  // Mirror epoch lines to stdout and keep the newest checkpoints on disk so
  // an aborted run still leaves the last good state behind.
  auto save_epoch = [&](const bgn::Checkpoint& ckpt, bool is_best) {
    ckpt.save(final_path);
    if (is_best) ckpt.save(best_path);
  };

  bgn::TrainResult result;
  class Tee : public std::streambuf {
   public:
    Tee(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

   protected:
    int overflow(int c) override {
      if (c == EOF) return !EOF;
      return a_->sputc(c) == EOF || b_->sputc(c) == EOF ? EOF : c;
    }

   private:
    std::streambuf* a_;
    std::streambuf* b_;
  } tee(log.rdbuf(), std::cout.rdbuf());
  std::ostream log_stream(&tee);

  if (!resume_path.empty()) {
    const bgn::Checkpoint ckpt = bgn::Checkpoint::load(resume_path);
    result = bgn::resume_training(ckpt, cfg, data.train, data.val, &log_stream,
                                  save_epoch);
  } else {
    result =
        bgn::train_model(cfg, data.train, data.val, &log_stream, save_epoch);
  }
  std::cout << "final epoch " << result.final_checkpoint.epoch
            << ", best val accuracy " << result.best_val_accuracy << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& out_path) {
  const bgn::Checkpoint ckpt = bgn::Checkpoint::load(ckpt_path);
  const bgn::Dataset data = bgn::load_dataset(data_path);
  bgn::check_vocab(ckpt, data.header);
  bgn::RestoredModel restored = bgn::restore_model(ckpt);
  const bgn::EvalReport report = bgn::evaluate(*restored.model, data);
  std::cout << report.to_table();
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw bgn::DataError("cannot open '" + out_path + "'");
    out << report.to_json() << "\n";
  }
  return 0;
}

int ablation_workers(std::size_t tasks) {
  int workers = static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  if (const char* env = std::getenv("BGN_NUM_WORKERS")) {
    try {
      workers = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw bgn::UsageError("BGN_NUM_WORKERS must be an integer");
    }
  }
  return std::min<int>(workers, static_cast<int>(tasks));
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir, std::int64_t seed) {
  bgn::Config cfg = load_config(config_path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  DataPair data = load_data_dir(data_dir);
  fs::create_directories(out_dir);

  std::vector<std::pair<std::string, int>> cells;
  for (const char* variant : {"ban", "sdp", "bgn"}) {
    for (int layers : {1, 2, 3}) cells.emplace_back(variant, layers);
  }
  const std::vector<std::uint64_t> seeds = {cfg.seed, cfg.seed + 1,
                                            cfg.seed + 2};
  const bgn::AblationResult result =
      bgn::run_ablation(cfg, data.train, data.val, cells, seeds,
                        ablation_workers(cells.size() * seeds.size()),
                        &std::cout);
  const std::string table = result.to_table();
  std::cout << table;
  {
    std::ofstream out(fs::path(out_dir) / "ablation.json");
    out << result.to_json() << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / "ablation.txt");
    out << table;
  }
  return 0;
}

json tensor_to_json(const bgn::Tensor& t) {
  json rows = json::array();
  for (int i = 0; i < t.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < t.cols(); ++j) row.push_back(t.at(i, j));
    rows.push_back(row);
  }
  return rows;
}

json map_group_to_json(const bgn::AttentionMap& map) {
  json j;
  j["mode"] = map.mode == bgn::SoftmaxMode::kJoint ? "joint" : "per_row";
  json glimpses = json::array();
  bgn::Tensor summed;
  for (int g = 0; g < map.glimpses(); ++g) {
    glimpses.push_back(tensor_to_json(map.weights[g]));
    summed = g == 0 ? map.weights[g] : bgn::add(summed, map.weights[g]);
  }
  j["glimpses"] = glimpses;
  if (summed.defined()) j["summed"] = tensor_to_json(summed);
  return j;
}

int cmd_dump_attention(const std::string& ckpt_path,
                       const std::string& data_path, int record_index,
                       const std::string& out_path) {
  const bgn::Checkpoint ckpt = bgn::Checkpoint::load(ckpt_path);
  const bgn::Dataset data = bgn::load_dataset(data_path);
  bgn::check_vocab(ckpt, data.header);
  if (record_index < 0 ||
      record_index >= static_cast<int>(data.records.size())) {
    throw bgn::DataError("record index " + std::to_string(record_index) +
                         " out of range (have " +
                         std::to_string(data.records.size()) + ")");
  }
  bgn::RestoredModel restored = bgn::restore_model(ckpt);
  const bgn::SceneRecord& rec = data.records[record_index];

  bgn::LayerTrace trace;
  bgn::Tensor scores = restored.model->forward_scores(
      rec.token_ids, bgn::mask_from(rec.q_mask), rec.features,
      bgn::mask_from(rec.v_mask), {}, &trace);

  json j;
  j["record_index"] = record_index;
  json tokens = json::array();
  for (std::size_t t = 0; t < rec.token_ids.size(); ++t) {
    if (rec.q_mask[t]) tokens.push_back(data.header.vocab[rec.token_ids[t]]);
  }
  j["tokens"] = tokens;
  json objects = json::array();
  for (int i = 0; i < data.header.n_max; ++i) {
    if (!rec.v_mask[i]) continue;
    const double* f = rec.features.data() + i * data.header.d_raw;
    auto argmax = [&](int begin, int end) {
      int best = begin;
      for (int k = begin + 1; k < end; ++k)
        if (f[k] > f[best]) best = k;
      return best;
    };
    json obj;
    obj["label"] = bgn::kColorNames[argmax(3, 7) - 3] + " " +
                   bgn::kSizeNames[argmax(7, 9) - 7] + " " +
                   bgn::kShapeNames[argmax(0, 3)];
    obj["x"] = f[9];
    obj["y"] = f[10];
    objects.push_back(obj);
  }
  j["objects"] = objects;
  j["prediction"] = data.header.answers[bgn::predict(scores)];
  std::string target;
  int best_count = -1;
  for (const auto& [answer, count] : rec.answer_counts) {
    if (count > best_count) {
      best_count = count;
      target = answer;
    }
  }
  j["target"] = target;

  json layers = json::array();
  for (const auto& step : trace.layers) {
    json layer;
    layer["image"] = map_group_to_json(step.image);
    if (step.question.glimpses() > 0) {
      layer["question"] = map_group_to_json(step.question);
    }
    layers.push_back(layer);
  }
  j["layers"] = layers;

  std::ofstream out(out_path);
  if (!out) throw bgn::DataError("cannot open '" + out_path + "'");
  out << j.dump(2) << "\n";
  std::cout << "wrote attention trace for record " << record_index << " to "
            << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bilinear graph networks on a synthetic relational-QA task"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, variant, resume_path;
  std::int64_t seed = -1;
  int layers = 0;
  int record_index = 0;

  CLI::App* generate = app.add_subcommand("generate", "generate a corpus");
  generate->add_option("--config", config_path, "config file");
  generate->add_option("--out", out_path, "output directory")->required();
  generate->add_option("--seed", seed, "corpus seed");

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "config file");
  train->add_option("--data", data_path, "dataset directory")->required();
  train->add_option("--out", out_path, "checkpoint path prefix")->required();
  train->add_option("--variant", variant, "bgn|ban|sdp");
  train->add_option("--layers", layers, "stack depth L");
  train->add_option("--seed", seed, "training seed");
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", resume_path, "checkpoint file")->required();
  eval->add_option("--data", data_path, "dataset file")->required();
  eval->add_option("--out", out_path, "json report path");

  CLI::App* ablate = app.add_subcommand("ablate", "variant x layers matrix");
  ablate->add_option("--config", config_path, "config file");
  ablate->add_option("--data", data_path, "dataset directory")->required();
  ablate->add_option("--out", out_path, "output directory")->required();
  ablate->add_option("--seed", seed, "base seed");

  CLI::App* dump = app.add_subcommand("dump-attention", "dump attention maps");
  dump->add_option("checkpoint", resume_path, "checkpoint file")->required();
  dump->add_option("--data", data_path, "dataset file")->required();
  dump->add_option("--record", record_index, "record index")->required();
  dump->add_option("--out", out_path, "trace output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(config_path, out_path, seed);
    if (train->parsed()) {
      return cmd_train(config_path, data_path, out_path, variant, layers, seed,
                       resume_path);
    }
    if (eval->parsed()) return cmd_eval(resume_path, data_path, out_path);
    if (ablate->parsed())
      return cmd_ablate(config_path, data_path, out_path, seed);
    if (dump->parsed())
      return cmd_dump_attention(resume_path, data_path, record_index, out_path);
  } catch (const bgn::UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 1;
  } catch (const bgn::DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 2;
  } catch (const bgn::NumericError& e) {
    std::cerr << "error: numeric: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
