#pragma once

// On-disk formats. All binary fields are little-endian.
//
// Feature file (.cusf):
//   "CUSF" | u32 version=1 | u64 n | u32 d |
//   n x { u16 id_len | id bytes | d x f32 }
//
// Checkpoint (.cusc):
//   "CUSC" | u32 version=1 | u32 d_bi | u32 d_bt | u32 d_e | u32 d_u |
//   f64 w_img[d_bi*d_e] | f64 w_txt[d_bt*d_e] | f64 u_img[d_e*d_u] |
//   f64 u_txt[d_e*d_u] (all row-major) | f64 log_inv_temp |
//   u8 has_uni_temp | f64 log_inv_temp_uni |
//   config echo: f64 alpha | f64 beta | u64 batch_size | u64 epochs | f64 lr |
//   u64 seed | f64 teacher_inv_temp | u8 separate_uni_temp | f64 beta1 |
//   f64 beta2 | f64 epsilon | f64 weight_decay | u32 embed_dim | u32 usa_dim |
//   u8 eval_usa_branch
//
// Pairs file: "image_id<TAB>text_id<LF>" per positive pair.
// Relevance file: "query_id<TAB>id,id,...<LF>" per query.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cusa/config.hpp"
#include "cusa/core_math.hpp"
#include "cusa/student.hpp"

namespace cusa {

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct FeatureTable {
  std::vector<std::string> ids;
  MatrixX<float> values;  ///< ids.size() x d

  Index size() const noexcept { return static_cast<Index>(ids.size()); }
  Index dim() const noexcept { return values.cols(); }
  /// id -> row; throws DuplicateId.
  std::unordered_map<std::string, Index> index() const;
  Matrix as_double() const { return values.cast<double>(); }
};

void write_features(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable read_features(const std::filesystem::path& path);
/// Raw byte encoding / decoding used by the two functions above.
std::string encode_features(const FeatureTable& table);
FeatureTable decode_features(const std::string& bytes);

struct Pair {
  std::string image_id;
  std::string text_id;

  friend bool operator==(const Pair&, const Pair&) = default;
};
using PairList = std::vector<Pair>;

PairList read_pairs(const std::filesystem::path& path);
PairList parse_pairs(const std::string& text);
void write_pairs(const std::filesystem::path& path, const PairList& pairs);
/// Throws UnknownId (position = 1-based line) for ids absent from the tables.
void validate_pairs(const PairList& pairs, const FeatureTable& images, const FeatureTable& texts);

/// query id -> relevant gallery ids (file order within a line).
using RetrievalRelevance = std::map<std::string, std::vector<std::string>>;

RetrievalRelevance read_relevance(const std::filesystem::path& path);
RetrievalRelevance parse_relevance(const std::string& text);
/// Same, additionally rejecting ids outside `known` with UnknownId.
RetrievalRelevance read_relevance(const std::filesystem::path& path,
                                  const std::unordered_set<std::string>& known);
void write_relevance(const std::filesystem::path& path, const RetrievalRelevance& rel);

struct Checkpoint {
  StudentParams params;
  TrainConfig config;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace cusa
