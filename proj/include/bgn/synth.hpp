#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bgn/rng.hpp"

namespace bgn {

// Geometry and sampling knobs for the synthetic relational-QA corpus.
struct SynthConfig {
  int n_max = 16;         // object slots per scene
  int min_objects = 3;
  int max_words = 15;     // padded question length m
  double min_distance = 0.05;   // minimum pairwise object distance
  double left_dy = 0.3;         // |dy| band for the "left of" relation
  double nearest_margin = 0.01; // required gap to the 2nd nearest object
  std::string hop_cycle = "123";  // hop class per record, cycled
};

inline constexpr int kSceneFeatureDim = 12;  // 3+4+2 one-hots, x, y, validity

extern const std::vector<std::string> kShapeNames;   // circle square triangle
extern const std::vector<std::string> kColorNames;   // red green blue yellow
extern const std::vector<std::string> kSizeNames;    // small large

struct SceneObject {
  int shape;  // index into kShapeNames
  int color;
  int size;
  double x, y;
};

struct SceneSpec {
  std::vector<SceneObject> objects;
};

struct SceneRecord {
  std::vector<double> features;       // n_max x kSceneFeatureDim, row-major
  std::vector<std::uint8_t> v_mask;   // n_max
  std::vector<int> token_ids;         // max_words
  std::vector<std::uint8_t> q_mask;   // max_words
  std::map<std::string, int> answer_counts;
  int hops = 0;
  int template_id = 0;
};

// Question vocabulary and answer list, fixed and written into the dataset
// header so files are self-describing.
const std::vector<std::string>& question_vocab();
const std::vector<std::string>& answer_vocab();
int token_id(const std::string& word);  // throws DataError on unknown word

// Uniform attributes, positions rejected until pairwise distances clear
// cfg.min_distance. Deterministic given the rng state.
SceneSpec generate_scene(const SynthConfig& cfg, Rng& rng);

struct GeneratedQuestion {
  std::vector<std::string> words;
  std::string answer;
  int template_id;
};

// Samples one unambiguous question of the requested hop count, or nullopt
// if the scene admits none. hops: 1 "what color is the <shape>", 2 "what
// shape is left of the <color> <shape>", 3 "what color is the object
// nearest to the thing left of the <color> <shape>".
std::optional<GeneratedQuestion> generate_question(const SceneSpec& scene,
                                                   int hops,
                                                   const SynthConfig& cfg,
                                                   Rng& rng);

// Scene -> padded feature/token record.
SceneRecord make_record(const SceneSpec& scene, const GeneratedQuestion& q,
                        int hops, const SynthConfig& cfg);

// count records with hop classes cycled per cfg.hop_cycle; scenes that
// admit no valid question are skipped deterministically.
std::vector<SceneRecord> build_corpus(const SynthConfig& cfg,
                                      std::uint64_t seed, int count);

struct DatasetHeader {
  int format_version = 1;
  int d_raw = kSceneFeatureDim;
  int n_max = 0;
  int m = 0;
  std::vector<std::string> vocab;
  std::vector<std::string> answers;
  int count = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<SceneRecord> records;
};

// Line-delimited JSON, one record per line after a single header line.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);  // throws DataError

// Geometric relations shared by the generator; tests reimplement these
// scans independently.
bool left_of(const SceneObject& a, const SceneObject& b,
             const SynthConfig& cfg);
double object_distance(const SceneObject& a, const SceneObject& b);

}  // namespace bgn
