#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "cusa/io.hpp"
#include "oracles.hpp"

using namespace cusa;
namespace fs = std::filesystem;

namespace {

FeatureTable small_table() {
  FeatureTable t;
  t.ids = {"a", "bb"};
  t.values.resize(2, 3);
  t.values << 1.5f, -2.f, 0.f, 3.25f, 1e-7f, -1e30f;
  return t;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidConfig;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cusa_test_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Checkpoint sample_checkpoint(bool uni) {
  Checkpoint c{init_params(3, {5, 4, 3, 2}, uni), TrainConfig{}};
  c.config.alpha = 0.25;
  c.config.beta = 0.75;
  c.config.seed = 1234567890123ull;
  c.config.separate_uni_temp = uni;
  c.config.embed_dim = 3;
  c.config.usa_dim = 2;
  c.params.log_inv_temp = 2.5;
  return c;
}

}  // namespace

TEST_CASE("feature encoding layout") {
  const auto bytes = encode_features(small_table());
  REQUIRE(bytes.size() == 4 + 4 + 8 + 4 + (2 + 1 + 12) + (2 + 2 + 12));
  CHECK(bytes.substr(0, 4) == "CUSF");
  const unsigned char header[] = {1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0, 1, 0, 'a'};
  CHECK(std::memcmp(bytes.data() + 4, header, sizeof header) == 0);
  float first = 0;
  std::memcpy(&first, bytes.data() + 23, 4);
  CHECK(first == 1.5f);
  CHECK(static_cast<unsigned char>(bytes[35]) == 2);
  CHECK(bytes.substr(37, 2) == "bb");
}

TEST_CASE("feature round trip is bit exact") {
  const auto t = small_table();
  const auto back = decode_features(encode_features(t));
  CHECK(back.ids == t.ids);
  CHECK(back.values == t.values);
  CHECK(encode_features(back) == encode_features(t));

  std::mt19937_64 rng(31);
  FeatureTable big;
  for (int i = 0; i < 40; ++i) big.ids.push_back("id_" + std::to_string(i));
  big.values = oracle::random_matrix(rng, 40, 17, -100, 100).cast<float>();
  TempDir dir;
  write_features(dir.path / "f.cusf", big);
  const auto read = read_features(dir.path / "f.cusf");
  CHECK(read.ids == big.ids);
  CHECK(read.values == big.values);
  CHECK(read.index().at("id_7") == 7);
}

TEST_CASE("feature encoding rejects bad tables") {
  FeatureTable empty;
  empty.values.resize(0, 3);
  CHECK(kind_of([&] { encode_features(empty); }) == ErrorKind::EmptyTable);
  auto dup = small_table();
  dup.ids[1] = "a";
  CHECK(kind_of([&] { encode_features(dup); }) == ErrorKind::DuplicateId);
  CHECK(kind_of([&] { dup.index(); }) == ErrorKind::DuplicateId);
  auto nan = small_table();
  nan.values(1, 2) = std::numeric_limits<float>::quiet_NaN();
  CHECK(kind_of([&] { encode_features(nan); }) == ErrorKind::NonFiniteValue);
}

TEST_CASE("feature decoding errors") {
  const auto good = encode_features(small_table());
  for (std::size_t len = 0; len < good.size(); ++len) {
    try {
      decode_features(good.substr(0, len));
      FAIL("prefix of ", len, " bytes accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TruncatedFile);
      REQUIRE(e.position().has_value());
      CHECK(*e.position() <= len);
    }
  }

  auto magic = good;
  magic[0] = 'X';
  CHECK(kind_of([&] { decode_features(magic); }) == ErrorKind::BadMagic);
  auto version = good;
  version[4] = 2;
  CHECK(kind_of([&] { decode_features(version); }) == ErrorKind::VersionUnsupported);
  auto dup = good;
  dup[35] = 1;
  dup.erase(38, 1);
  dup[37] = 'a';
  CHECK(kind_of([&] { decode_features(dup); }) == ErrorKind::DuplicateId);

  auto nan = good;
  const float q = std::numeric_limits<float>::infinity();
  std::memcpy(nan.data() + 27, &q, 4);
  try {
    decode_features(nan);
    FAIL("expected NonFiniteValue");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteValue);
    CHECK(e.position() == 27u);
  }
  CHECK(kind_of([&] { decode_features(good + "x"); }) == ErrorKind::IoFailure);
  auto zero_n = good;
  std::memset(zero_n.data() + 8, 0, 8);
  CHECK(kind_of([&] { decode_features(zero_n); }) == ErrorKind::EmptyTable);
}

TEST_CASE("pairs") {
  const auto p = parse_pairs("i1\tt1\ni1\tt2\ni1\tt1\ni2\tt3");
  REQUIRE(p.size() == 4);
  CHECK(p[0] == Pair{"i1", "t1"});
  CHECK(p[2] == p[0]);
  CHECK(p[3] == Pair{"i2", "t3"});
  CHECK(parse_pairs("").empty());

  try {
    parse_pairs("i1\tt1\ni2\tt2\tx\n");
    FAIL("expected MalformedLine");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MalformedLine);
    CHECK(e.position() == 2u);
  }
  CHECK(kind_of([] { parse_pairs("i1 t1\n"); }) == ErrorKind::MalformedLine);
  CHECK(kind_of([] { parse_pairs("\tt1\n"); }) == ErrorKind::MalformedLine);

  TempDir dir;
  write_pairs(dir.path / "p.tsv", p);
  CHECK(read_pairs(dir.path / "p.tsv") == p);
  CHECK(read_file(dir.path / "p.tsv") == "i1\tt1\ni1\tt2\ni1\tt1\ni2\tt3\n");

  FeatureTable img, txt;
  img.ids = {"i1", "i2"};
  img.values = MatrixX<float>::Ones(2, 1);
  txt.ids = {"t1", "t2"};
  txt.values = MatrixX<float>::Ones(2, 1);
  try {
    validate_pairs(p, img, txt);
    FAIL("expected UnknownId");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownId);
    CHECK(e.position() == 4u);
    CHECK(std::string(e.what()).find("t3") != std::string::npos);
  }
  CHECK_NOTHROW(validate_pairs({p[0], p[1]}, img, txt));
}

TEST_CASE("relevance") {
  const auto r = parse_relevance("q1\ta,b,c\nq2\tb\n");
  CHECK(r.at("q1") == std::vector<std::string>{"a", "b", "c"});
  CHECK(r.at("q2") == std::vector<std::string>{"b"});
  CHECK(kind_of([] { parse_relevance("q1\ta\nq1\tb\n"); }) == ErrorKind::DuplicateId);
  CHECK(kind_of([] { parse_relevance("q1\ta,,b\n"); }) == ErrorKind::MalformedLine);
  CHECK(kind_of([] { parse_relevance("q1\t\n"); }) == ErrorKind::MalformedLine);

  TempDir dir;
  write_relevance(dir.path / "r.tsv", r);
  CHECK(read_relevance(dir.path / "r.tsv") == r);
  CHECK(read_relevance(dir.path / "r.tsv", {"q1", "q2", "a", "b", "c"}) == r);
  try {
    read_relevance(dir.path / "r.tsv", {"q1", "q2", "a", "b"});
    FAIL("expected UnknownId");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownId);
    CHECK(e.position() == 1u);
  }
  CHECK(kind_of([&] { write_relevance(dir.path / "bad.tsv", {{"q", {}}}); }) == ErrorKind::EmptyRelevance);
  CHECK(kind_of([&] { write_relevance(dir.path / "bad.tsv", {{"q", {"a,b"}}}); }) == ErrorKind::MalformedLine);
}

TEST_CASE("checkpoint round trip") {
  for (const bool uni : {false, true}) {
    const auto c = sample_checkpoint(uni);
    const auto bytes = encode_checkpoint(c);
    CHECK(bytes.substr(0, 4) == "CUSC");
    const auto back = decode_checkpoint(bytes);
    CHECK(back.params.w_img == c.params.w_img);
    CHECK(back.params.w_txt == c.params.w_txt);
    CHECK(back.params.u_img == c.params.u_img);
    CHECK(back.params.u_txt == c.params.u_txt);
    CHECK(back.params.log_inv_temp == 2.5);
    CHECK(back.params.log_inv_temp_uni == c.params.log_inv_temp_uni);
    CHECK(back.config == c.config);
    CHECK(encode_checkpoint(back) == bytes);
  }
  TempDir dir;
  const auto c = sample_checkpoint(true);
  write_checkpoint(dir.path / "m.cusc", c);
  CHECK(encode_checkpoint(read_checkpoint(dir.path / "m.cusc")) == encode_checkpoint(c));
}

TEST_CASE("checkpoint decoding errors") {
  const auto good = encode_checkpoint(sample_checkpoint(false));
  for (std::size_t len = 0; len < good.size(); len += 3) {
    try {
      decode_checkpoint(good.substr(0, len));
      FAIL("prefix of ", len, " bytes accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TruncatedFile);
      REQUIRE(e.position().has_value());
      CHECK(*e.position() <= len);
    }
  }
  auto magic = good;
  magic[3] = 'F';
  CHECK(kind_of([&] { decode_checkpoint(magic); }) == ErrorKind::BadMagic);
  auto version = good;
  version[4] = 9;
  CHECK(kind_of([&] { decode_checkpoint(version); }) == ErrorKind::VersionUnsupported);
  CHECK(kind_of([&] { decode_checkpoint(good + "zz"); }) == ErrorKind::IoFailure);
  auto nan = good;
  const double q = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(nan.data() + 24, &q, 8);
  CHECK(kind_of([&] { decode_checkpoint(nan); }) == ErrorKind::NonFiniteValue);
}

TEST_CASE("missing files") {
  const fs::path nowhere = "/nonexistent/cusa/file";
  CHECK(kind_of([&] { read_file(nowhere); }) == ErrorKind::IoFailure);
  CHECK(kind_of([&] { read_features(nowhere); }) == ErrorKind::IoFailure);
  CHECK(kind_of([&] { read_pairs(nowhere); }) == ErrorKind::IoFailure);
  CHECK(kind_of([&] { write_file(nowhere, "x"); }) == ErrorKind::IoFailure);
}
