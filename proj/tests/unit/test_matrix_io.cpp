#include "hglmm/errors.hpp"
#include "hglmm/matrix_io.hpp"
#include "test_util.hpp"

#include <cstring>
#include <limits>
#include <sstream>

using namespace hglmm;
using testutil::TempDir;

namespace {

// Little-endian encoding built byte by byte, independent of the writer.
std::string le32(std::uint32_t v) {
  std::string s;
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  return s;
}

std::string le64(double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  std::string s;
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  return s;
}

}  // namespace

TEST_CASE("save then load a 2x3 matrix returns it unchanged") {
  TempDir dir;
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  save_matrix(m, dir / "m.fvm");
  const Matrix back = load_matrix(dir / "m.fvm");
  CHECK(back == m);
}

TEST_CASE("file layout is magic, little-endian dims, then row-major float64") {
  TempDir dir;
  Matrix m(2, 3);
  m << 1, -2.5, 3, 4, 5e-300, 6;
  save_matrix(m, dir / "m.fvm");
  std::string want = "FVM1" + le32(2) + le32(3);
  for (double v : {1.0, -2.5, 3.0, 4.0, 5e-300, 6.0}) want += le64(v);
  CHECK(testutil::slurp(dir / "m.fvm") == want);
}

TEST_CASE("a 1x1 matrix is header plus one float64") {
  TempDir dir;
  save_matrix(Matrix::Zero(1, 1), dir / "one.fvm");
  CHECK(std::filesystem::file_size(dir / "one.fvm") == kFvm1HeaderBytes + 8);
  CHECK(std::filesystem::file_size(dir / "one.fvm") == 20);
}

TEST_CASE("bad magic is a format error") {
  TempDir dir;
  testutil::spit(dir / "bad.fvm", "XXXX" + le32(1) + le32(1) + le64(0.0));
  CHECK_THROWS_AS(load_matrix(dir / "bad.fvm"), FormatError);
}

TEST_CASE("truncated and oversized files are format errors") {
  TempDir dir;
  testutil::spit(dir / "short.fvm", "FVM1" + le32(2) + le32(2) + le64(1.0));
  CHECK_THROWS_AS(load_matrix(dir / "short.fvm"), FormatError);
  testutil::spit(dir / "long.fvm", "FVM1" + le32(1) + le32(1) + le64(1.0) + "x");
  CHECK_THROWS_AS(load_matrix(dir / "long.fvm"), FormatError);
  testutil::spit(dir / "head.fvm", "FVM1" + le32(1));
  CHECK_THROWS_AS(load_matrix(dir / "head.fvm"), FormatError);
  CHECK_THROWS_AS(load_matrix(dir / "missing.fvm"), FormatError);
}

TEST_CASE("non-finite payload on load is a validation error") {
  TempDir dir;
  testutil::spit(dir / "nan.fvm", "FVM1" + le32(1) + le32(2) + le64(1.0) + le64(std::numeric_limits<double>::quiet_NaN()));
  CHECK_THROWS_AS(load_matrix(dir / "nan.fvm"), ValidationError);
}

TEST_CASE("saving invalid matrices is a validation error") {
  TempDir dir;
  CHECK_THROWS_AS(save_matrix(Matrix(0, 3), dir / "e.fvm"), ValidationError);
  CHECK_THROWS_AS(save_matrix(Matrix(3, 0), dir / "e.fvm"), ValidationError);
  Matrix m = Matrix::Ones(2, 2);
  m(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(save_matrix(m, dir / "n.fvm"), ValidationError);
  m(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(save_matrix(m, dir / "n.fvm"), ValidationError);
}

TEST_CASE("set index parses, round-trips and checks bounds") {
  std::istringstream in("a\t0\t3\nb\t3\t5\n");
  const auto idx = parse_set_index(in);
  REQUIRE(idx.size() == 2);
  CHECK(idx.entries[1].id == "b");
  CHECK(idx.entries[1].size() == 2);
  CHECK_NOTHROW(idx.check_bounds(5));
  CHECK_THROWS_AS(idx.check_bounds(4), ValidationError);
  CHECK_FALSE(idx.is_row_labels());

  TempDir dir;
  save_set_index(idx, dir / "s.tsv");
  const auto back = load_set_index(dir / "s.tsv");
  CHECK(back.ids() == idx.ids());
  CHECK(testutil::slurp(dir / "s.tsv") == "a\t0\t3\nb\t3\t5\n");
}

TEST_CASE("overlapping, empty and duplicate set ranges are rejected") {
  std::istringstream overlap("a\t0\t3\nb\t2\t5\n");
  CHECK_THROWS_AS(parse_set_index(overlap), ValidationError);
  std::istringstream empty("a\t2\t2\n");
  CHECK_THROWS_AS(parse_set_index(empty), ValidationError);
  std::istringstream dup("a\t0\t1\na\t1\t2\n");
  CHECK_THROWS_AS(parse_set_index(dup), ValidationError);
  std::istringstream fields("a\t0\n");
  CHECK_THROWS_AS(parse_set_index(fields), FormatError);
  std::istringstream number("a\tx\t1\n");
  CHECK_THROWS_AS(parse_set_index(number), FormatError);
}

TEST_CASE("row labels cover one row each") {
  const auto idx = row_labels({"x", "y", "z"});
  CHECK(idx.is_row_labels());
  CHECK(idx.entries[2].begin == 2);
  CHECK(idx.entries[2].end == 3);
}

TEST_CASE("extract_set copies the range") {
  Matrix m(4, 2);
  m << 0, 1, 2, 3, 4, 5, 6, 7;
  const Matrix s = extract_set(m, {"s", 1, 3});
  CHECK(s.rows() == 2);
  CHECK(s(0, 0) == 2);
  CHECK(s(1, 1) == 5);
  CHECK_THROWS_AS(extract_set(m, {"s", 3, 5}), ShapeError);
}

TEST_CASE("manifest with two sentences of one image is valid") {
  std::istringstream in("s1\timg\ttrain\ns2\timg\ttrain\n");
  const auto man = parse_manifest(in);
  REQUIRE(man.pairs.size() == 2);
  CHECK(man.pairs[1].image_id == "img");
  CHECK(man.by_sentence().at("s2") == 1);
  CHECK(man.image_splits().at("img") == Split::Train);

  TempDir dir;
  save_manifest(man, dir / "m.tsv");
  CHECK(load_manifest(dir / "m.tsv").pairs.size() == 2);
}

TEST_CASE("manifest split vocabulary is closed") {
  std::istringstream dev("s1\timg\tdev\n");
  CHECK_THROWS_AS(parse_manifest(dev), ValidationError);
  std::istringstream dup("s1\timg\ttrain\ns1\timg2\ttest\n");
  CHECK_THROWS_AS(parse_manifest(dup), ValidationError);
  CHECK(parse_split("validation") == Split::Validation);
  CHECK(to_string(Split::Test) == "test");
}

TEST_CASE("container header round-trips and checks magic") {
  std::stringstream ss;
  write_container_header(ss, "HGLMM-TEST", "v1", {{"K", "3"}, {"family", "gmm"}});
  CHECK(ss.str() == "HGLMM-TEST v1 K=3 family=gmm\n");
  const auto h = read_container_header(ss, "HGLMM-TEST");
  CHECK(h.field("family") == "gmm");
  CHECK(h.count_field("K") == 3);
  CHECK_THROWS_AS(h.field("D"), FormatError);

  std::stringstream other("HGLMM-OTHER v1 K=3\n");
  CHECK_THROWS_AS(read_container_header(other, "HGLMM-TEST"), FormatError);
  std::stringstream version("HGLMM-TEST v2 K=3\n");
  CHECK_THROWS_AS(read_container_header(version, "HGLMM-TEST"), FormatError);
}
