#include "cusa/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>

namespace cusa {

namespace {

class ByteWriter {
 public:
  void raw(std::string_view s) { out_.append(s); }

  template <typename T>
  void le(T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2,
                                                                       std::uint16_t,
                                                                       std::uint8_t>>>;
    auto bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<char>(bits & 0xFFu));
      if constexpr (sizeof(T) > 1) bits = static_cast<U>(bits >> 8);
    }
  }

  void matrix(const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) le(m(i, j));
    }
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const char* what) : bytes_(bytes), what_(what) {}

  std::uint64_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  std::string_view raw(std::size_t n, const char* field) {
    need(n, field);
    std::string_view v(bytes_.data() + pos_, n);
    pos_ += n;
    return v;
  }

  template <typename T>
  T le(const char* field) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2,
                                                                       std::uint16_t,
                                                                       std::uint8_t>>>;
    need(sizeof(T), field);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i]))
                             << (8 * i));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  Matrix matrix(Index rows, Index cols, const char* field) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        const std::uint64_t at = pos_;
        m(i, j) = le<double>(field);
        if (!std::isfinite(m(i, j))) {
          throw Error(ErrorKind::NonFiniteValue,
                      std::string(what_) + ": non-finite " + field + " at byte " +
                          std::to_string(at),
                      at);
        }
      }
    }
    return m;
  }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorKind::TruncatedFile,
                  std::string(what_) + ": truncated while reading " + field + " at byte " +
                      std::to_string(pos_),
                  pos_);
    }
  }

  const std::string& bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

void check_text_id(const std::string& id) {
  if (id.empty() || id.find_first_of("\t\n\r,") != std::string::npos) {
    throw Error(ErrorKind::MalformedLine,
                "id '" + id + "' is empty or contains a tab, comma or line break");
  }
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

// Calls fn(line, 1-based line number) for every newline-terminated line.
// A missing final newline is tolerated.
template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::size_t start = 0;
  std::uint64_t line_no = 0;
  while (start < text.size()) {
    ++line_no;
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    fn(std::string_view(text).substr(start, end - start), line_no);
    start = end + 1;
  }
}

[[noreturn]] void malformed(std::uint64_t line_no, const std::string& why) {
  throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": " + why, line_no);
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::IoFailure, "read failed: " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorKind::IoFailure, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Features

std::unordered_map<std::string, Index> FeatureTable::index() const {
  std::unordered_map<std::string, Index> idx;
  idx.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!idx.emplace(ids[i], static_cast<Index>(i)).second) {
      throw Error(ErrorKind::DuplicateId, "duplicate id '" + ids[i] + "'", i);
    }
  }
  return idx;
}

std::string encode_features(const FeatureTable& t) {
  if (t.ids.empty() || t.values.cols() < 1) {
    throw Error(ErrorKind::EmptyTable, "feature tables need n >= 1 and d >= 1");
  }
  if (t.values.rows() != t.size()) {
    throw Error(ErrorKind::ShapeMismatch, "id count differs from value rows");
  }
  if (t.values.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorKind::InvalidDimension, "feature width does not fit in 32 bits");
  }
  (void)t.index();
  ByteWriter w;
  w.raw("CUSF");
  w.le<std::uint32_t>(kFeatureFormatVersion);
  w.le<std::uint64_t>(static_cast<std::uint64_t>(t.size()));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
  for (Index i = 0; i < t.size(); ++i) {
    const auto& id = t.ids[static_cast<std::size_t>(i)];
    check_text_id(id);
    if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error(ErrorKind::MalformedLine, "id longer than 65535 bytes");
    }
    w.le<std::uint16_t>(static_cast<std::uint16_t>(id.size()));
    w.raw(id);
    for (Index j = 0; j < t.dim(); ++j) {
      const float v = t.values(i, j);
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::NonFiniteValue, "non-finite value for id '" + id + "'",
                    static_cast<std::uint64_t>(i));
      }
      w.le(v);
    }
  }
  return w.take();
}

FeatureTable decode_features(const std::string& bytes) {
  ByteReader r(bytes, "feature file");
  if (r.raw(4, "magic") != "CUSF") {
    throw Error(ErrorKind::BadMagic, "feature file: expected magic CUSF at byte 0", 0);
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kFeatureFormatVersion) {
    throw Error(ErrorKind::VersionUnsupported,
                "feature file: version " + std::to_string(version) + " at byte 4", 4);
  }
  const auto n = r.le<std::uint64_t>("n");
  const auto d = r.le<std::uint32_t>("d");
  if (n == 0 || d == 0) {
    throw Error(ErrorKind::EmptyTable, "feature file: n and d must be >= 1", 8);
  }
  // Each record needs at least 2 + 4d bytes; reject absurd n before allocating.
  const std::uint64_t min_record = 2 + 4ull * d;
  if (n > (bytes.size() - r.offset()) / min_record) {
    throw Error(ErrorKind::TruncatedFile,
                "feature file: header declares " + std::to_string(n) +
                    " records but the file is too short (" + std::to_string(bytes.size()) +
                    " bytes)",
                bytes.size());
  }
  FeatureTable t;
  t.ids.reserve(n);
  t.values.resize(static_cast<Index>(n), static_cast<Index>(d));
  std::unordered_set<std::string> seen;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto rec_at = r.offset();
    const auto len = r.le<std::uint16_t>("id length");
    std::string id(r.raw(len, "id"));
    if (!seen.insert(id).second) {
      throw Error(ErrorKind::DuplicateId,
                  "feature file: duplicate id '" + id + "' at byte " + std::to_string(rec_at),
                  rec_at);
    }
    for (std::uint32_t j = 0; j < d; ++j) {
      const auto at = r.offset();
      const float v = r.le<float>("value");
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::NonFiniteValue,
                    "feature file: non-finite value at byte " + std::to_string(at), at);
      }
      t.values(static_cast<Index>(i), static_cast<Index>(j)) = v;
    }
    t.ids.push_back(std::move(id));
  }
  if (!r.at_end()) {
    throw Error(ErrorKind::IoFailure,
                "feature file: trailing bytes at byte " + std::to_string(r.offset()), r.offset());
  }
  return t;
}

void write_features(const std::filesystem::path& path, const FeatureTable& table) {
  write_file(path, encode_features(table));
}

FeatureTable read_features(const std::filesystem::path& path) {
  return decode_features(read_file(path));
}

// ---------------------------------------------------------------------------
// Pairs

PairList parse_pairs(const std::string& text) {
  PairList pairs;
  for_each_line(text, [&](std::string_view line, std::uint64_t line_no) {
    const auto fields = split(line, '\t');
    if (fields.size() != 2) {
      malformed(line_no, "expected 2 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) malformed(line_no, "empty id");
    if (fields[1].find('\r') != std::string_view::npos) malformed(line_no, "carriage return");
    pairs.push_back({std::string(fields[0]), std::string(fields[1])});
  });
  return pairs;
}

PairList read_pairs(const std::filesystem::path& path) { return parse_pairs(read_file(path)); }

void write_pairs(const std::filesystem::path& path, const PairList& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    check_text_id(p.image_id);
    check_text_id(p.text_id);
    out += p.image_id;
    out += '\t';
    out += p.text_id;
    out += '\n';
  }
  write_file(path, out);
}

void validate_pairs(const PairList& pairs, const FeatureTable& images, const FeatureTable& texts) {
  const auto img = images.index();
  const auto txt = texts.index();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto line = static_cast<std::uint64_t>(i + 1);
    if (!img.contains(pairs[i].image_id)) {
      throw Error(ErrorKind::UnknownId,
                  "pairs line " + std::to_string(line) + ": unknown image id '" +
                      pairs[i].image_id + "'",
                  line);
    }
    if (!txt.contains(pairs[i].text_id)) {
      throw Error(ErrorKind::UnknownId,
                  "pairs line " + std::to_string(line) + ": unknown text id '" +
                      pairs[i].text_id + "'",
                  line);
    }
  }
}

// ---------------------------------------------------------------------------
// Relevance

RetrievalRelevance parse_relevance(const std::string& text) {
  RetrievalRelevance rel;
  for_each_line(text, [&](std::string_view line, std::uint64_t line_no) {
    const auto fields = split(line, '\t');
    if (fields.size() != 2) {
      malformed(line_no, "expected 2 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) malformed(line_no, "empty query id");
    if (fields[1].empty()) malformed(line_no, "empty relevant set");
    std::vector<std::string> ids;
    for (auto id : split(fields[1], ',')) {
      if (id.empty()) malformed(line_no, "empty relevant id");
      if (id.find('\r') != std::string_view::npos) malformed(line_no, "carriage return");
      ids.emplace_back(id);
    }
    if (!rel.emplace(std::string(fields[0]), std::move(ids)).second) {
      throw Error(ErrorKind::DuplicateId,
                  "line " + std::to_string(line_no) + ": query '" + std::string(fields[0]) +
                      "' listed twice",
                  line_no);
    }
  });
  return rel;
}

RetrievalRelevance read_relevance(const std::filesystem::path& path) {
  return parse_relevance(read_file(path));
}

RetrievalRelevance read_relevance(const std::filesystem::path& path,
                                  const std::unordered_set<std::string>& known) {
  const std::string text = read_file(path);
  auto rel = parse_relevance(text);
  // Re-walk the lines so that errors carry line numbers.
  for_each_line(text, [&](std::string_view line, std::uint64_t line_no) {
    const auto fields = split(line, '\t');
    std::vector<std::string_view> ids = split(fields[1], ',');
    ids.push_back(fields[0]);
    for (auto id : ids) {
      if (!known.contains(std::string(id))) {
        throw Error(ErrorKind::UnknownId,
                    "relevance line " + std::to_string(line_no) + ": unknown id '" +
                        std::string(id) + "'",
                    line_no);
      }
    }
  });
  return rel;
}

void write_relevance(const std::filesystem::path& path, const RetrievalRelevance& rel) {
  std::string out;
  for (const auto& [query, ids] : rel) {
    check_text_id(query);
    if (ids.empty()) {
      throw Error(ErrorKind::EmptyRelevance, "query '" + query + "' has no relevant ids");
    }
    out += query;
    out += '\t';
    for (std::size_t i = 0; i < ids.size(); ++i) {
      check_text_id(ids[i]);
      if (i) out += ',';
      out += ids[i];
    }
    out += '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// Checkpoint

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  const auto dims = p.dims();
  if (p.w_txt.cols() != dims.embed || p.u_img.rows() != dims.embed ||
      p.u_txt.rows() != dims.embed || p.u_txt.cols() != dims.usa) {
    throw Error(ErrorKind::ShapeMismatch, "inconsistent parameter shapes");
  }
  const auto& c = ckpt.config;
  ByteWriter w;
  w.raw("CUSC");
  w.le<std::uint32_t>(kCheckpointFormatVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(dims.base_img));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(dims.base_txt));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(dims.embed));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(dims.usa));
  w.matrix(p.w_img);
  w.matrix(p.w_txt);
  w.matrix(p.u_img);
  w.matrix(p.u_txt);
  w.le(p.log_inv_temp);
  w.le<std::uint8_t>(p.log_inv_temp_uni ? 1 : 0);
  w.le(p.log_inv_temp_uni.value_or(0.0));
  w.le(c.alpha);
  w.le(c.beta);
  w.le(c.batch_size);
  w.le(c.epochs);
  w.le(c.learning_rate);
  w.le(c.seed);
  w.le(c.teacher_inv_temp);
  w.le<std::uint8_t>(c.separate_uni_temp ? 1 : 0);
  w.le(c.beta1);
  w.le(c.beta2);
  w.le(c.epsilon);
  w.le(c.weight_decay);
  w.le(c.embed_dim);
  w.le(c.usa_dim);
  w.le<std::uint8_t>(c.eval_usa_branch ? 1 : 0);
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  ByteReader r(bytes, "checkpoint");
  if (r.raw(4, "magic") != "CUSC") {
    throw Error(ErrorKind::BadMagic, "checkpoint: expected magic CUSC at byte 0", 0);
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointFormatVersion) {
    throw Error(ErrorKind::VersionUnsupported,
                "checkpoint: version " + std::to_string(version) + " at byte 4", 4);
  }
  ModelDims dims;
  dims.base_img = r.le<std::uint32_t>("d_bi");
  dims.base_txt = r.le<std::uint32_t>("d_bt");
  dims.embed = r.le<std::uint32_t>("d_e");
  dims.usa = r.le<std::uint32_t>("d_u");
  if (dims.base_img < 1 || dims.base_txt < 1 || dims.embed < 1 || dims.usa < 1) {
    throw Error(ErrorKind::InvalidDimension, "checkpoint: zero dimension in header", 8);
  }
  const std::uint64_t payload =
      8ull * static_cast<std::uint64_t>((dims.base_img + dims.base_txt) * dims.embed +
                                        2 * dims.embed * dims.usa);
  if (payload > bytes.size()) {
    throw Error(ErrorKind::TruncatedFile,
                "checkpoint: header declares more parameters than the file holds",
                bytes.size());
  }
  Checkpoint ck;
  auto& p = ck.params;
  p.w_img = r.matrix(dims.base_img, dims.embed, "w_img");
  p.w_txt = r.matrix(dims.base_txt, dims.embed, "w_txt");
  p.u_img = r.matrix(dims.embed, dims.usa, "u_img");
  p.u_txt = r.matrix(dims.embed, dims.usa, "u_txt");
  p.log_inv_temp = r.le<double>("log_inv_temp");
  const auto has_uni = r.le<std::uint8_t>("uni temperature flag");
  const auto uni = r.le<double>("log_inv_temp_uni");
  if (has_uni) p.log_inv_temp_uni = uni;
  auto& c = ck.config;
  c.alpha = r.le<double>("alpha");
  c.beta = r.le<double>("beta");
  c.batch_size = r.le<std::uint64_t>("batch_size");
  c.epochs = r.le<std::uint64_t>("epochs");
  c.learning_rate = r.le<double>("learning_rate");
  c.seed = r.le<std::uint64_t>("seed");
  c.teacher_inv_temp = r.le<double>("teacher_inv_temp");
  c.separate_uni_temp = r.le<std::uint8_t>("separate_uni_temp") != 0;
  c.beta1 = r.le<double>("beta1");
  c.beta2 = r.le<double>("beta2");
  c.epsilon = r.le<double>("epsilon");
  c.weight_decay = r.le<double>("weight_decay");
  c.embed_dim = r.le<std::uint32_t>("embed_dim");
  c.usa_dim = r.le<std::uint32_t>("usa_dim");
  c.eval_usa_branch = r.le<std::uint8_t>("eval_usa_branch") != 0;
  if (!r.at_end()) {
    throw Error(ErrorKind::IoFailure,
                "checkpoint: trailing bytes at byte " + std::to_string(r.offset()), r.offset());
  }
  if (!std::isfinite(p.log_inv_temp) || !std::isfinite(uni)) {
    throw Error(ErrorKind::NonFiniteValue, "checkpoint: non-finite temperature");
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace cusa
