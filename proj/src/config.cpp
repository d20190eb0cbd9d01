#include "bgn/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "bgn/errors.hpp"

namespace bgn {

namespace {

// Desk-scale schedule keeps the warm/plateau/decay shape of the paper-scale
// one (0.001 +0.001/epoch to 0.004, flat to epoch 10, then x0.25 every 2
// epochs to 0.00025) compressed into an 8-epoch run.
Schedule desk_schedule() {
  Schedule s;
  s.base_lr = 0.001;
  s.warm_increment = 0.001;
  s.warm_target = 0.004;
  s.plateau_end_epoch = 5;
  s.decay_factor = 0.25;
  s.decay_every = 2;
  s.floor_lr = 0.00025;
  return s;
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return r;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected integer, got '" + v +
                     "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return r;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected number, got '" + v +
                     "'");
  }
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

Config Config::desk_defaults() {
  Config c;
  c.schedule = desk_schedule();
  return c;
}

void Config::apply_line(const std::string& key, const std::string& value) {
  // Model dims. Paper scale: C=1024, D=2048, K=K'=1024, d=3, g=4, m=15,
  // n=100, dropout 0.2.
  if (key == "C") model.c = static_cast<int>(parse_int(key, value));
  else if (key == "D") model.d_obj = static_cast<int>(parse_int(key, value));
  else if (key == "D_raw") model.d_raw = static_cast<int>(parse_int(key, value));
  else if (key == "K") model.k = static_cast<int>(parse_int(key, value));
  else if (key == "K_prime") model.k_prime = static_cast<int>(parse_int(key, value));
  else if (key == "rank_d") model.rank = static_cast<int>(parse_int(key, value));
  else if (key == "glimpses") model.glimpses = static_cast<int>(parse_int(key, value));
  else if (key == "layers") model.layers = static_cast<int>(parse_int(key, value));
  else if (key == "max_words") {
    model.max_words = static_cast<int>(parse_int(key, value));
    synth.max_words = model.max_words;
  } else if (key == "max_objects") {
    model.max_objects = static_cast<int>(parse_int(key, value));
    synth.n_max = model.max_objects;
  } else if (key == "dropout") model.dropout_p = parse_double(key, value);
  else if (key == "variant") model.variant = variant_from_string(value);
  // Synthetic corpus.
  else if (key == "min_objects") synth.min_objects = static_cast<int>(parse_int(key, value));
  else if (key == "min_distance") synth.min_distance = parse_double(key, value);
  else if (key == "left_dy") synth.left_dy = parse_double(key, value);
  else if (key == "nearest_margin") synth.nearest_margin = parse_double(key, value);
  else if (key == "hop_cycle") synth.hop_cycle = value;
  else if (key == "train_records") train_records = static_cast<int>(parse_int(key, value));
  else if (key == "val_records") val_records = static_cast<int>(parse_int(key, value));
  // Training. Paper scale: batch 128, schedule plateau_end 10.
  else if (key == "epochs") epochs = static_cast<int>(parse_int(key, value));
  else if (key == "batch_size") batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "base_lr") schedule.base_lr = parse_double(key, value);
  else if (key == "warm_increment") schedule.warm_increment = parse_double(key, value);
  else if (key == "warm_target") schedule.warm_target = parse_double(key, value);
  else if (key == "plateau_end_epoch") schedule.plateau_end_epoch = static_cast<int>(parse_int(key, value));
  else if (key == "decay_factor") schedule.decay_factor = parse_double(key, value);
  else if (key == "decay_every") schedule.decay_every = static_cast<int>(parse_int(key, value));
  else if (key == "floor_lr") schedule.floor_lr = parse_double(key, value);
  else if (key == "adamax_beta1") adamax.beta1 = parse_double(key, value);
  else if (key == "adamax_beta2") adamax.beta2 = parse_double(key, value);
  else if (key == "adamax_epsilon") adamax.epsilon = parse_double(key, value);
  else throw UsageError("invalid config key '" + key + "'");
}

Config Config::from_string(const std::string& text) {
  Config c = desk_defaults();
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    c.apply_line(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

std::string Config::to_string() const {
  std::ostringstream o;
  o.precision(17);  // doubles round-trip exactly
  o << "C = " << model.c << "\n";
  o << "D = " << model.d_obj << "\n";
  o << "D_raw = " << model.d_raw << "\n";
  o << "K = " << model.k << "\n";
  o << "K_prime = " << model.k_prime << "\n";
  o << "rank_d = " << model.rank << "\n";
  o << "glimpses = " << model.glimpses << "\n";
  o << "layers = " << model.layers << "\n";
  o << "max_words = " << model.max_words << "\n";
  o << "max_objects = " << model.max_objects << "\n";
  o << "dropout = " << model.dropout_p << "\n";
  o << "variant = " << bgn::to_string(model.variant) << "\n";
  o << "min_objects = " << synth.min_objects << "\n";
  o << "min_distance = " << synth.min_distance << "\n";
  o << "left_dy = " << synth.left_dy << "\n";
  o << "nearest_margin = " << synth.nearest_margin << "\n";
  o << "hop_cycle = " << synth.hop_cycle << "\n";
  o << "train_records = " << train_records << "\n";
  o << "val_records = " << val_records << "\n";
  o << "epochs = " << epochs << "\n";
  o << "batch_size = " << batch_size << "\n";
  o << "seed = " << seed << "\n";
  o << "base_lr = " << schedule.base_lr << "\n";
  o << "warm_increment = " << schedule.warm_increment << "\n";
  o << "warm_target = " << schedule.warm_target << "\n";
  o << "plateau_end_epoch = " << schedule.plateau_end_epoch << "\n";
  o << "decay_factor = " << schedule.decay_factor << "\n";
  o << "decay_every = " << schedule.decay_every << "\n";
  o << "floor_lr = " << schedule.floor_lr << "\n";
  o << "adamax_beta1 = " << adamax.beta1 << "\n";
  o << "adamax_beta2 = " << adamax.beta2 << "\n";
  o << "adamax_epsilon = " << adamax.epsilon << "\n";
  return o.str();
}

}  // namespace bgn
