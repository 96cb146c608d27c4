#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "mgce/core.hpp"
#include "mgce/dbscan.hpp"
#include "mgce/ensemble.hpp"
#include "mgce/encoder.hpp"
#include "mgce/error.hpp"
#include "mgce/eval.hpp"
#include "mgce/trainer.hpp"

namespace mgce {

// FEATv1 feature file: little-endian binary, bit-exact round trip.
//   magic "FEATv1" (6 bytes), u32 N, u32 D, u8 has_ids, u8 has_cams,
//   N*D f64 row-major, then N i32 ids and N i32 cams when flagged.
inline constexpr char kFeatMagic[6] = {'F', 'E', 'A', 'T', 'v', '1'};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void i32(std::int32_t v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("format_error", "cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) fail("format_error", "short write to '" + path + "'");
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::string path, std::vector<char> data)
      : path_(std::move(path)), data_(std::move(data)) {}

  static ByteReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("format_error", "cannot open '" + path + "'");
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(path, std::move(data));
  }

  std::size_t offset() const { return off_; }
  std::size_t remaining() const { return data_.size() - off_; }

  std::uint8_t u8() {
    need(1, "u8");
    return static_cast<std::uint8_t>(data_[off_++]);
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[off_ + i])) << (8 * i);
    off_ += 4;
    return v;
  }
  std::int32_t i32() { return std::bit_cast<std::int32_t>(u32()); }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[off_ + i])) << (8 * i);
    off_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  void expect_magic(const char* magic, std::size_t len) {
    need(len, "magic");
    if (std::memcmp(data_.data() + off_, magic, len) != 0)
      fail("format_error", "'" + path_ + "': bad magic at byte 0, expected " +
                               std::string(magic, len));
    off_ += len;
  }

  void expect_end() {
    if (off_ != data_.size())
      fail("format_error", "'" + path_ + "': " + std::to_string(data_.size() - off_) +
                               " trailing bytes at byte " + std::to_string(off_));
  }

  bool peek_magic(const char* magic, std::size_t len) const {
    return data_.size() >= len && std::memcmp(data_.data(), magic, len) == 0;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (off_ + n > data_.size())
      fail("format_error", "'" + path_ + "': truncated " + what + " at byte " +
                               std::to_string(off_));
  }

  std::string path_;
  std::vector<char> data_;
  std::size_t off_ = 0;
};

inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

struct FeatureFile {
  MatrixX<double> features;
  std::vector<int> ids;   // empty when absent
  std::vector<int> cams;  // empty when absent
};

inline void write_features(const std::string& path, const MatrixX<double>& features,
                           const std::vector<int>& ids = {}, const std::vector<int>& cams = {}) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (!ids.empty() && ids.size() != n)
    fail("shape_mismatch", "write_features: ids array does not align with rows");
  if (!cams.empty() && cams.size() != n)
    fail("shape_mismatch", "write_features: cams array does not align with rows");
  detail::ByteWriter w;
  w.raw(kFeatMagic, sizeof(kFeatMagic));
  w.u32(static_cast<std::uint32_t>(features.rows()));
  w.u32(static_cast<std::uint32_t>(features.cols()));
  w.u8(ids.empty() ? 0 : 1);
  w.u8(cams.empty() ? 0 : 1);
  for (Index i = 0; i < features.rows(); ++i)
    for (Index j = 0; j < features.cols(); ++j) w.f64(features(i, j));
  for (const int v : ids) w.i32(v);
  for (const int v : cams) w.i32(v);
  w.save(path);
}

namespace detail {

inline FeatureFile read_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("format_error", "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) fail("format_error", "'" + path + "': empty file");
  // header: id,cam,f0,...,f{D-1}
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (start <= line.size()) {
    const auto comma = line.find(',', start);
    cols.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (cols.size() < 3 || cols[0] != "id" || cols[1] != "cam" || cols[2] != "f0")
    fail("format_error", "'" + path + "': CSV header must start with id,cam,f0");
  const auto dim = static_cast<Index>(cols.size() - 2);

  std::vector<double> values;
  std::vector<int> ids, cams;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    auto next_field = [&](bool last) -> std::string_view {
      const char* comma = static_cast<const char*>(std::memchr(p, ',', static_cast<std::size_t>(end - p)));
      if (!last && comma == nullptr)
        fail("format_error", "'" + path + "' line " + std::to_string(lineno) + ": too few fields");
      const char* stop = comma ? comma : end;
      std::string_view f(p, static_cast<std::size_t>(stop - p));
      p = comma ? comma + 1 : end;
      return f;
    };
    auto parse_int = [&](std::string_view f) {
      int v = 0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        fail("format_error", "'" + path + "' line " + std::to_string(lineno) + ": bad integer '" +
                                 std::string(f) + "'");
      return v;
    };
    auto parse_double = [&](std::string_view f) {
      double v = 0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        fail("format_error", "'" + path + "' line " + std::to_string(lineno) + ": bad number '" +
                                 std::string(f) + "'");
      return v;
    };
    ids.push_back(parse_int(next_field(false)));
    cams.push_back(parse_int(next_field(false)));
    for (Index j = 0; j < dim; ++j) values.push_back(parse_double(next_field(j + 1 == dim)));
    if (p != end)
      fail("format_error", "'" + path + "' line " + std::to_string(lineno) + ": too many fields");
  }
  if (ids.empty()) fail("format_error", "'" + path + "': no data rows");

  FeatureFile f;
  f.features.resize(static_cast<Index>(ids.size()), dim);
  for (Index i = 0; i < f.features.rows(); ++i)
    for (Index j = 0; j < dim; ++j)
      f.features(i, j) = values[static_cast<std::size_t>(i * dim + j)];
  f.ids = std::move(ids);
  f.cams = std::move(cams);
  return f;
}

}  // namespace detail

// Reads FEATv1 when the magic matches; files starting with the CSV header
// go through the CSV import (header row `id,cam,f0,...`).
inline FeatureFile read_features(const std::string& path) {
  auto r = detail::ByteReader::from_file(path);
  if (!r.peek_magic(kFeatMagic, sizeof(kFeatMagic))) {
    if (r.peek_magic("id,cam", 6)) return detail::read_features_csv(path);
    fail("format_error",
         "'" + path + "': bad magic at byte 0, expected FEATv1 (or a CSV with header id,cam,...)");
  }
  r.expect_magic(kFeatMagic, sizeof(kFeatMagic));
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  if (n == 0 || d == 0) fail("format_error", "'" + path + "': empty dimensions in header");
  const std::uint8_t has_ids = r.u8();
  const std::uint8_t has_cams = r.u8();
  FeatureFile f;
  f.features.resize(static_cast<Index>(n), static_cast<Index>(d));
  for (Index i = 0; i < f.features.rows(); ++i)
    for (Index j = 0; j < f.features.cols(); ++j) f.features(i, j) = r.f64();
  if (has_ids) {
    f.ids.resize(n);
    for (auto& v : f.ids) v = r.i32();
  }
  if (has_cams) {
    f.cams.resize(n);
    for (auto& v : f.cams) v = r.i32();
  }
  r.expect_end();
  return f;
}

// One label per line, row i = label of sample i.
inline void write_labels_csv(const std::string& path, const ClusterLabeling& labeling) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("format_error", "cannot open '" + path + "' for writing");
  for (const int l : labeling.labels) out << l << '\n';
}

inline ClusterLabeling read_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("format_error", "cannot open '" + path + "'");
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    int v = 0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size())
      fail("format_error", "'" + path + "' line " + std::to_string(lineno) + ": bad label");
    labels.push_back(v);
  }
  return ClusterLabeling::from_labels(std::move(labels));
}

// Header line "N,T", then one "i,j,p" triple per stored pair with i < j.
// The unit diagonal is implied.
template <typename Scalar>
void write_priority_csv(const std::string& path, const PriorityMatrix<Scalar>& prio) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("format_error", "cannot open '" + path + "' for writing");
  out << prio.n << ',' << prio.t << '\n';
  for (Index i = 0; i < prio.n; ++i)
    for (const auto& e : prio.rows[static_cast<std::size_t>(i)])
      if (e.j > i)
        out << i << ',' << e.j << ',' << detail::fmt_double(static_cast<double>(e.p)) << '\n';
}

inline PriorityMatrix<double> read_priority_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("format_error", "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) fail("format_error", "'" + path + "': missing N,T header");
  Index n = 0;
  int t = 0;
  {
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail("format_error", "'" + path + "': bad N,T header");
    n = std::stoll(line.substr(0, comma));
    t = std::stoi(line.substr(comma + 1));
  }
  std::vector<std::tuple<Index, Index, double>> triples;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos)
      fail("format_error", "'" + path + "' line " + std::to_string(lineno) + ": expected i,j,p");
    triples.emplace_back(std::stoll(line.substr(0, c1)), std::stoll(line.substr(c1 + 1, c2 - c1 - 1)),
                         std::stod(line.substr(c2 + 1)));
  }
  return PriorityMatrix<double>::from_triples(n, t, triples);
}

// Encoder checkpoint: little-endian blob with a versioned header.
//   magic "MGCENC" (6 bytes), u32 version, u8 identity_mode,
//   u32 num_sizes, u32 sizes[], then per tensor u32 rows, u32 cols,
//   f64 data row-major.
inline constexpr char kEncoderMagic[6] = {'M', 'G', 'C', 'E', 'N', 'C'};

template <typename Scalar>
void write_encoder(const std::string& path, const Encoder<Scalar>& enc) {
  detail::ByteWriter w;
  w.raw(kEncoderMagic, sizeof(kEncoderMagic));
  w.u32(1);
  w.u8(enc.config().identity_mode ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(enc.config().layer_sizes.size()));
  for (const Index s : enc.config().layer_sizes) w.u32(static_cast<std::uint32_t>(s));
  for (const auto& p : enc.params()) {
    w.u32(static_cast<std::uint32_t>(p.rows()));
    w.u32(static_cast<std::uint32_t>(p.cols()));
    for (Index i = 0; i < p.rows(); ++i)
      for (Index j = 0; j < p.cols(); ++j) w.f64(static_cast<double>(p(i, j)));
  }
  w.save(path);
}

inline Encoder<double> read_encoder(const std::string& path) {
  auto r = detail::ByteReader::from_file(path);
  r.expect_magic(kEncoderMagic, sizeof(kEncoderMagic));
  const std::uint32_t version = r.u32();
  if (version != 1)
    fail("format_error", "'" + path + "': unsupported encoder version " + std::to_string(version));
  EncoderConfig cfg;
  cfg.identity_mode = r.u8() != 0;
  const std::uint32_t num_sizes = r.u32();
  for (std::uint32_t i = 0; i < num_sizes; ++i) cfg.layer_sizes.push_back(static_cast<Index>(r.u32()));
  std::vector<MatrixX<double>> params;
  const std::size_t expected = cfg.identity_mode ? 0 : 2 * (cfg.layer_sizes.size() - 1);
  for (std::size_t t = 0; t < expected; ++t) {
    const auto rows = static_cast<Index>(r.u32());
    const auto cols = static_cast<Index>(r.u32());
    MatrixX<double> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = r.f64();
    params.push_back(std::move(m));
  }
  r.expect_end();
  return encoder_from_parts(cfg, std::move(params));
}

// Training log: one JSON object per epoch.
inline void write_trainlog(const std::string& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("format_error", "cannot open '" + path + "' for writing");
  for (const auto& e : log) {
    nlohmann::json j{{"epoch", e.epoch},
                     {"mean_loss", e.mean_loss},
                     {"clusters_per_granularity", e.clusters_per_granularity},
                     {"noise_fraction", e.noise_fraction}};
    out << j.dump() << '\n';
  }
}

inline nlohmann::json eval_to_json(const EvalResult& r) {
  return nlohmann::json{{"map", r.map},         {"cmc1", r.cmc1},
                        {"cmc5", r.cmc5},       {"cmc10", r.cmc10},
                        {"num_queries", r.num_queries}, {"num_skipped", r.num_skipped}};
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("format_error", "cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("format_error", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("format_error", "'" + path + "': " + e.what());
  }
  return j;
}

}  // namespace mgce
