#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hglmm {

/// Row = sample, column = dimension.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

// ---------------------------------------------------------------------------
// FVM1 binary matrices
//
//   bytes 0-3   "FVM1"
//   bytes 4-7   rows, uint32 little-endian
//   bytes 8-11  cols, uint32 little-endian
//   then rows*cols IEEE-754 float64 little-endian, row-major
// ---------------------------------------------------------------------------

inline constexpr std::size_t kFvm1HeaderBytes = 12;

/// Throws ValidationError unless m has at least one row and column and every entry is finite.
void validate_matrix(const Matrix& m, std::string_view what = "matrix");

void write_fvm1(std::ostream& out, const Matrix& m);
Matrix read_fvm1(std::istream& in);

void save_matrix(const Matrix& m, const std::filesystem::path& path);
Matrix load_matrix(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Descriptor set index: set_id \t row_begin \t row_end (0-based, end-exclusive)
// ---------------------------------------------------------------------------

struct SetRange {
  std::string id;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};

struct DescriptorSetIndex {
  std::vector<SetRange> entries;

  std::size_t size() const { return entries.size(); }
  std::vector<std::string> ids() const;
  /// Throws ValidationError unless every range lies within [0, rows).
  void check_bounds(std::size_t rows) const;
  /// True when entry i covers exactly row i, i.e. the index just labels rows.
  bool is_row_labels() const;
};

/// Throws ValidationError on empty/overlapping ranges or duplicate ids.
void validate_set_index(const DescriptorSetIndex& index);
DescriptorSetIndex parse_set_index(std::istream& in);
DescriptorSetIndex load_set_index(const std::filesystem::path& path);
void save_set_index(const DescriptorSetIndex& index, const std::filesystem::path& path);
/// One single-row range per id, in order.
DescriptorSetIndex row_labels(const std::vector<std::string>& ids);

/// Copies the rows of one set out of the descriptor matrix.
Matrix extract_set(const Matrix& descriptors, const SetRange& range);

// ---------------------------------------------------------------------------
// Dataset manifest: sentence_id \t image_id \t split
// ---------------------------------------------------------------------------

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view token);

struct ManifestEntry {
  std::string sentence_id;
  std::string image_id;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::vector<ManifestEntry> pairs;

  /// sentence_id -> position in pairs.
  std::map<std::string, std::size_t, std::less<>> by_sentence() const;
  /// image_id -> split of its sentences (the first one seen).
  std::map<std::string, Split, std::less<>> image_splits() const;
};

void validate_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::istream& in);
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Containers: one text header line followed by FVM1 blocks. Used for models,
// transforms and CCA projections.
// ---------------------------------------------------------------------------

struct ContainerHeader {
  std::string magic;                                  // e.g. "HGLMM-MODEL"
  std::string version;                                // e.g. "v1"
  std::map<std::string, std::string, std::less<>> fields;  // key=value pairs, in file order by key

  const std::string& field(std::string_view key) const;
  std::size_t count_field(std::string_view key) const;
};

/// Writes "magic version k1=v1 k2=v2 ...\n" with the keys in the given order.
void write_container_header(std::ostream& out, std::string_view magic, std::string_view version,
                            const std::vector<std::pair<std::string, std::string>>& fields);
ContainerHeader read_container_header(std::istream& in, std::string_view expected_magic);

}  // namespace hglmm
