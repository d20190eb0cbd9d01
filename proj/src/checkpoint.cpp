#include "bgn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "bgn/errors.hpp"

namespace bgn {

namespace {

constexpr char kMagic[8] = {'B', 'G', 'N', 'C', 'K', 'P', 'T', '\n'};

void put_u32(std::ostream& o, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  o.write(b, 4);
}

void put_u64(std::ostream& o, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  o.write(b, 8);
}

void put_f64(std::ostream& o, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  o.write(b, 8);
}

void put_string(std::ostream& o, const std::string& s) {
  put_u64(o, s.size());
  o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& i) {
  char b[4];
  i.read(b, 4);
  std::uint32_t v;
  std::memcpy(&v, b, 4);
  return v;
}

std::uint64_t get_u64(std::istream& i) {
  char b[8];
  i.read(b, 8);
  std::uint64_t v;
  std::memcpy(&v, b, 8);
  return v;
}

double get_f64(std::istream& i) {
  char b[8];
  i.read(b, 8);
  double v;
  std::memcpy(&v, b, 8);
  return v;
}

std::string get_string(std::istream& i) {
  const std::uint64_t n = get_u64(i);
  std::string s(n, '\0');
  i.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

void put_tensors(std::ostream& o,
                 const std::vector<Checkpoint::NamedTensor>& ts) {
  put_u64(o, ts.size());
  for (const auto& t : ts) {
    put_string(o, t.name);
    put_u32(o, static_cast<std::uint32_t>(t.rows));
    put_u32(o, static_cast<std::uint32_t>(t.cols));
    put_u64(o, t.data.size());
    o.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
}

std::vector<Checkpoint::NamedTensor> get_tensors(std::istream& i) {
  const std::uint64_t count = get_u64(i);
  std::vector<Checkpoint::NamedTensor> ts(count);
  for (auto& t : ts) {
    t.name = get_string(i);
    t.rows = static_cast<int>(get_u32(i));
    t.cols = static_cast<int>(get_u32(i));
    t.data.resize(get_u64(i));
    i.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  return ts;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, format_version);
  put_string(out, config_text);
  put_u64(out, vocab.size());
  for (const auto& w : vocab) put_string(out, w);
  put_u64(out, answers.size());
  for (const auto& a : answers) put_string(out, a);
  put_u32(out, static_cast<std::uint32_t>(epoch));
  put_u64(out, seed);
  put_u64(out, static_cast<std::uint64_t>(opt_step));
  put_f64(out, best_val_accuracy);
  put_tensors(out, tensors);
  put_tensors(out, opt_m);
  put_tensors(out, opt_u);
  put_u64(out, history.size());
  for (const auto& h : history) {
    put_u32(out, static_cast<std::uint32_t>(h.epoch));
    put_f64(out, h.lr);
    put_f64(out, h.train_loss);
    put_f64(out, h.val_accuracy);
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError("'" + path + "' is not a checkpoint file");
  }
  Checkpoint c;
  c.format_version = get_u32(in);
  if (c.format_version != 1) {
    throw DataError("unsupported checkpoint version " +
                    std::to_string(c.format_version));
  }
  c.config_text = get_string(in);
  c.vocab.resize(get_u64(in));
  for (auto& w : c.vocab) w = get_string(in);
  c.answers.resize(get_u64(in));
  for (auto& a : c.answers) a = get_string(in);
  c.epoch = static_cast<int>(get_u32(in));
  c.seed = get_u64(in);
  c.opt_step = static_cast<std::int64_t>(get_u64(in));
  c.best_val_accuracy = get_f64(in);
  c.tensors = get_tensors(in);
  c.opt_m = get_tensors(in);
  c.opt_u = get_tensors(in);
  const std::uint64_t hist = get_u64(in);
  c.history.resize(hist);
  for (auto& h : c.history) {
    h.epoch = static_cast<int>(get_u32(in));
    h.lr = get_f64(in);
    h.train_loss = get_f64(in);
    h.val_accuracy = get_f64(in);
  }
  if (!in) throw DataError("truncated checkpoint '" + path + "'");
  return c;
}

}  // namespace bgn
