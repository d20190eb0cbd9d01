#include "bgn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "bgn/errors.hpp"

namespace bgn {

using nlohmann::json;

const std::vector<std::string> kShapeNames = {"circle", "square", "triangle"};
const std::vector<std::string> kColorNames = {"red", "green", "blue", "yellow"};
const std::vector<std::string> kSizeNames = {"small", "large"};

const std::vector<std::string>& question_vocab() {
  static const std::vector<std::string> vocab = {
      "<pad>", "what",    "color",  "is",     "the",   "shape", "left",
      "of",    "object",  "nearest", "to",    "thing", "?",     "circle",
      "square", "triangle", "red",   "green", "blue",  "yellow"};
  return vocab;
}

const std::vector<std::string>& answer_vocab() {
  static const std::vector<std::string> answers = {
      "red", "green", "blue", "yellow", "circle", "square", "triangle"};
  return answers;
}

int token_id(const std::string& word) {
  const auto& vocab = question_vocab();
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i] == word) return static_cast<int>(i);
  }
  throw DataError("unknown question word '" + word + "'");
}

bool left_of(const SceneObject& a, const SceneObject& b,
             const SynthConfig& cfg) {
  return a.x < b.x && std::fabs(a.y - b.y) < cfg.left_dy;
}

double object_distance(const SceneObject& a, const SceneObject& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

SceneSpec generate_scene(const SynthConfig& cfg, Rng& rng) {
  const int count =
      cfg.min_objects +
      static_cast<int>(rng.uniform_int(cfg.n_max - cfg.min_objects + 1));
  SceneSpec scene;
  scene.objects.reserve(count);
  for (int i = 0; i < count; ++i) {
    SceneObject obj;
    obj.shape = static_cast<int>(rng.uniform_int(kShapeNames.size()));
    obj.color = static_cast<int>(rng.uniform_int(kColorNames.size()));
    obj.size = static_cast<int>(rng.uniform_int(kSizeNames.size()));
    for (;;) {
      obj.x = rng.uniform();
      obj.y = rng.uniform();
      bool clear = true;
      for (const auto& other : scene.objects) {
        if (object_distance(obj, other) < cfg.min_distance) {
          clear = false;
          break;
        }
      }
      if (clear) break;
    }
    scene.objects.push_back(obj);
  }
  return scene;
}

namespace {

// Index of the unique object with (color, shape), or -1.
int unique_color_shape(const SceneSpec& scene, int color, int shape) {
  int found = -1;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (scene.objects[i].color == color && scene.objects[i].shape == shape) {
      if (found >= 0) return -1;
      found = static_cast<int>(i);
    }
  }
  return found;
}

// Index of the unique object left of `ref`, or -1.
int unique_left_of(const SceneSpec& scene, int ref, const SynthConfig& cfg) {
  int found = -1;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (static_cast<int>(i) == ref) continue;
    if (left_of(scene.objects[i], scene.objects[ref], cfg)) {
      if (found >= 0) return -1;
      found = static_cast<int>(i);
    }
  }
  return found;
}

// Nearest object to `ref` with the margin to the runner-up, or -1.
int unique_nearest(const SceneSpec& scene, int ref, const SynthConfig& cfg) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  double second_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (static_cast<int>(i) == ref) continue;
    const double d = object_distance(scene.objects[i], scene.objects[ref]);
    if (d < best_d) {
      second_d = best_d;
      best_d = d;
      best = static_cast<int>(i);
    } else if (d < second_d) {
      second_d = d;
    }
  }
  if (best < 0) return -1;
  if (second_d - best_d < cfg.nearest_margin) return -1;
  return best;
}

struct Candidate {
  std::vector<std::string> words;
  std::string answer;
};

std::vector<Candidate> enumerate_questions(const SceneSpec& scene, int hops,
                                           const SynthConfig& cfg) {
  std::vector<Candidate> out;
  if (hops == 1) {
    for (std::size_t s = 0; s < kShapeNames.size(); ++s) {
      int found = -1;
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        if (scene.objects[i].shape == static_cast<int>(s)) {
          found = found < 0 ? static_cast<int>(i) : -2;
        }
      }
      if (found < 0) continue;
      out.push_back({{"what", "color", "is", "the", kShapeNames[s], "?"},
                     kColorNames[scene.objects[found].color]});
    }
    return out;
  }
  for (std::size_t r = 0; r < scene.objects.size(); ++r) {
    const SceneObject& ref = scene.objects[r];
    if (unique_color_shape(scene, ref.color, ref.shape) !=
        static_cast<int>(r)) {
      continue;
    }
    const int left = unique_left_of(scene, static_cast<int>(r), cfg);
    if (left < 0) continue;
    if (hops == 2) {
      out.push_back({{"what", "shape", "is", "left", "of", "the",
                      kColorNames[ref.color], kShapeNames[ref.shape], "?"},
                     kShapeNames[scene.objects[left].shape]});
    } else if (hops == 3) {
      const int near = unique_nearest(scene, left, cfg);
      if (near < 0) continue;
      out.push_back({{"what", "color", "is", "the", "object", "nearest", "to",
                      "the", "thing", "left", "of", "the",
                      kColorNames[ref.color], kShapeNames[ref.shape], "?"},
                     kColorNames[scene.objects[near].color]});
    }
  }
  return out;
}

}  // namespace

std::optional<GeneratedQuestion> generate_question(const SceneSpec& scene,
                                                   int hops,
                                                   const SynthConfig& cfg,
                                                   Rng& rng) {
  if (hops < 1 || hops > 3) {
    throw std::invalid_argument("generate_question: hops must be 1..3");
  }
  std::vector<Candidate> candidates = enumerate_questions(scene, hops, cfg);
  if (candidates.empty()) return std::nullopt;
  const Candidate& pick = candidates[rng.uniform_int(candidates.size())];
  return GeneratedQuestion{pick.words, pick.answer, hops - 1};
}

SceneRecord make_record(const SceneSpec& scene, const GeneratedQuestion& q,
                        int hops, const SynthConfig& cfg) {
  SceneRecord rec;
  rec.features.assign(
      static_cast<std::size_t>(cfg.n_max) * kSceneFeatureDim, 0.0);
  rec.v_mask.assign(cfg.n_max, 0);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& obj = scene.objects[i];
    double* f = rec.features.data() + i * kSceneFeatureDim;
    f[obj.shape] = 1.0;
    f[3 + obj.color] = 1.0;
    f[7 + obj.size] = 1.0;
    f[9] = obj.x;
    f[10] = obj.y;
    f[11] = 1.0;
    rec.v_mask[i] = 1;
  }
  if (static_cast<int>(q.words.size()) > cfg.max_words) {
    throw DataError("question of " + std::to_string(q.words.size()) +
                    " words does not fit max_words=" +
                    std::to_string(cfg.max_words));
  }
  rec.token_ids.assign(cfg.max_words, 0);
  rec.q_mask.assign(cfg.max_words, 0);
  for (std::size_t t = 0; t < q.words.size(); ++t) {
    rec.token_ids[t] = token_id(q.words[t]);
    rec.q_mask[t] = 1;
  }
  // Synthetic ground truth: a full annotator panel, so the soft target
  // saturates at 1.0.
  rec.answer_counts[q.answer] = 10;
  rec.hops = hops;
  rec.template_id = q.template_id;
  return rec;
}

std::vector<SceneRecord> build_corpus(const SynthConfig& cfg,
                                      std::uint64_t seed, int count) {
  if (cfg.hop_cycle.empty()) {
    throw UsageError("hop_cycle must not be empty");
  }
  for (char c : cfg.hop_cycle) {
    if (c < '1' || c > '3') {
      throw UsageError("hop_cycle may contain only 1, 2 or 3");
    }
  }
  Rng rng(Rng::mix(seed, 0x73796e7468ULL));
  std::vector<SceneRecord> records;
  records.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int hops = cfg.hop_cycle[i % cfg.hop_cycle.size()] - '0';
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000) {
        throw DataError("no valid " + std::to_string(hops) +
                        "-hop question after 1000 scenes");
      }
      SceneSpec scene = generate_scene(cfg, rng);
      auto q = generate_question(scene, hops, cfg, rng);
      if (!q) continue;
      records.push_back(make_record(scene, *q, hops, cfg));
      break;
    }
  }
  return records;
}

namespace {

json record_to_json(const SceneRecord& rec) {
  json j;
  j["features"] = rec.features;
  j["v_mask"] = rec.v_mask;
  j["token_ids"] = rec.token_ids;
  j["q_mask"] = rec.q_mask;
  j["answer_counts"] = rec.answer_counts;
  j["hops"] = rec.hops;
  j["template_id"] = rec.template_id;
  return j;
}

SceneRecord record_from_json(const json& j, const DatasetHeader& h,
                             int line_no) {
  SceneRecord rec;
  try {
    rec.features = j.at("features").get<std::vector<double>>();
    rec.v_mask = j.at("v_mask").get<std::vector<std::uint8_t>>();
    rec.token_ids = j.at("token_ids").get<std::vector<int>>();
    rec.q_mask = j.at("q_mask").get<std::vector<std::uint8_t>>();
    rec.answer_counts =
        j.at("answer_counts").get<std::map<std::string, int>>();
    rec.hops = j.at("hops").get<int>();
    rec.template_id = j.at("template_id").get<int>();
  } catch (const json::exception& e) {
    throw DataError("line " + std::to_string(line_no) +
                    ": malformed record: " + e.what());
  }
  if (rec.features.size() !=
          static_cast<std::size_t>(h.n_max) * h.d_raw ||
      rec.v_mask.size() != static_cast<std::size_t>(h.n_max) ||
      rec.token_ids.size() != static_cast<std::size_t>(h.m) ||
      rec.q_mask.size() != static_cast<std::size_t>(h.m)) {
    throw DataError("line " + std::to_string(line_no) +
                    ": record fields do not match header dimensions");
  }
  return rec;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  json h;
  h["format_version"] = ds.header.format_version;
  h["d_raw"] = ds.header.d_raw;
  h["n_max"] = ds.header.n_max;
  h["m"] = ds.header.m;
  h["vocab"] = ds.header.vocab;
  h["answers"] = ds.header.answers;
  h["count"] = static_cast<int>(ds.records.size());
  out << h.dump() << "\n";
  for (const auto& rec : ds.records) out << record_to_json(rec).dump() << "\n";
  if (!out) throw DataError("write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  Dataset ds;
  try {
    const json h = json::parse(line);
    ds.header.format_version = h.at("format_version").get<int>();
    if (ds.header.format_version != 1) {
      throw DataError("unsupported dataset format version " +
                      std::to_string(ds.header.format_version));
    }
    ds.header.d_raw = h.at("d_raw").get<int>();
    ds.header.n_max = h.at("n_max").get<int>();
    ds.header.m = h.at("m").get<int>();
    ds.header.vocab = h.at("vocab").get<std::vector<std::string>>();
    ds.header.answers = h.at("answers").get<std::vector<std::string>>();
    ds.header.count = h.at("count").get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string("line 1: malformed header: ") + e.what());
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) +
                      ": malformed record: " + e.what());
    }
    ds.records.push_back(record_from_json(j, ds.header, line_no));
  }
  if (static_cast<int>(ds.records.size()) != ds.header.count) {
    throw DataError("record count " + std::to_string(ds.records.size()) +
                    " does not match header count " +
                    std::to_string(ds.header.count));
  }
  return ds;
}

}  // namespace bgn
