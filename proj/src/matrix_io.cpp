#include "hglmm/matrix_io.hpp"

#include "hglmm/errors.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace hglmm {

namespace {

constexpr std::array<char, 4> kMagic{'F', 'V', 'M', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), b.size());
}

void put_f64(std::ostream& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(b.data(), b.size());
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double get_f64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return std::bit_cast<double>(v);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

std::size_t parse_index(std::string_view token, std::size_t line_no) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size())
    throw FormatError("line " + std::to_string(line_no) + ": bad row index '" + std::string(token) + "'");
  return v;
}

/// Yields non-empty lines with trailing CR stripped.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(std::string_view(line), line_no);
  }
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

void validate_matrix(const Matrix& m, std::string_view what) {
  if (m.rows() < 1 || m.cols() < 1)
    throw ValidationError(std::string(what) + " must have at least one row and one column");
  if (!m.allFinite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

void write_fvm1(std::ostream& out, const Matrix& m) {
  validate_matrix(m);
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max())
    throw ValidationError("matrix too large for FVM1");
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
  if (!out) throw FormatError("write failed");
}

Matrix read_fvm1(std::istream& in) {
  std::array<unsigned char, kFvm1HeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size())) throw FormatError("truncated FVM1 header");
  if (!std::equal(kMagic.begin(), kMagic.end(), header.begin()))
    throw FormatError("bad magic, expected FVM1");
  const std::uint32_t rows = get_u32(header.data() + 4);
  const std::uint32_t cols = get_u32(header.data() + 8);
  if (rows == 0 || cols == 0) throw FormatError("FVM1 with zero rows or columns");

  const std::size_t count = std::size_t{rows} * cols;
  std::vector<unsigned char> payload(count * 8);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size())) throw FormatError("truncated FVM1 payload");

  Matrix m(rows, cols);
  for (std::size_t i = 0; i < count; ++i) m.data()[i] = get_f64(payload.data() + 8 * i);
  if (!m.allFinite()) throw ValidationError("FVM1 payload contains non-finite values");
  return m;
}

void save_matrix(const Matrix& m, const std::filesystem::path& path) {
  validate_matrix(m);
  auto out = open_out(path, std::ios::binary);
  write_fvm1(out, m);
}

Matrix load_matrix(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  Matrix m = read_fvm1(in);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after FVM1 payload");
  return m;
}

// --- set index -------------------------------------------------------------

std::vector<std::string> DescriptorSetIndex::ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

void DescriptorSetIndex::check_bounds(std::size_t rows) const {
  for (const auto& e : entries)
    if (e.end > rows)
      throw ValidationError("set '" + e.id + "' ends at row " + std::to_string(e.end) + " but matrix has " +
                            std::to_string(rows) + " rows");
}

bool DescriptorSetIndex::is_row_labels() const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].begin != i || entries[i].end != i + 1) return false;
  return true;
}

void validate_set_index(const DescriptorSetIndex& index) {
  std::set<std::string_view> seen;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (const auto& e : index.entries) {
    if (e.id.empty()) throw ValidationError("empty set id");
    if (e.end <= e.begin) throw ValidationError("set '" + e.id + "' has an empty or inverted range");
    if (!seen.insert(e.id).second) throw ValidationError("duplicate set id '" + e.id + "'");
    ranges.emplace_back(e.begin, e.end);
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i)
    if (ranges[i].first < ranges[i - 1].second) throw ValidationError("overlapping set ranges");
}

DescriptorSetIndex parse_set_index(std::istream& in) {
  DescriptorSetIndex index;
  for_each_line(in, [&](std::string_view line, std::size_t line_no) {
    const auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw FormatError("set index line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    index.entries.push_back({std::string(fields[0]), parse_index(fields[1], line_no), parse_index(fields[2], line_no)});
  });
  validate_set_index(index);
  return index;
}

DescriptorSetIndex load_set_index(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_set_index(in);
}

void save_set_index(const DescriptorSetIndex& index, const std::filesystem::path& path) {
  validate_set_index(index);
  auto out = open_out(path);
  for (const auto& e : index.entries) out << e.id << '\t' << e.begin << '\t' << e.end << '\n';
  if (!out) throw FormatError("write failed: " + path.string());
}

DescriptorSetIndex row_labels(const std::vector<std::string>& ids) {
  DescriptorSetIndex index;
  index.entries.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) index.entries.push_back({ids[i], i, i + 1});
  return index;
}

Matrix extract_set(const Matrix& descriptors, const SetRange& range) {
  if (range.end > static_cast<std::size_t>(descriptors.rows()) || range.end <= range.begin)
    throw ShapeError("set '" + range.id + "' out of range");
  return descriptors.middleRows(static_cast<Eigen::Index>(range.begin), static_cast<Eigen::Index>(range.size()));
}

// --- manifest --------------------------------------------------------------

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view token) {
  if (token == "train") return Split::Train;
  if (token == "validation") return Split::Validation;
  if (token == "test") return Split::Test;
  throw ValidationError("unknown split '" + std::string(token) + "' (expected train, validation or test)");
}

std::map<std::string, std::size_t, std::less<>> DatasetManifest::by_sentence() const {
  std::map<std::string, std::size_t, std::less<>> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) out.emplace(pairs[i].sentence_id, i);
  return out;
}

std::map<std::string, Split, std::less<>> DatasetManifest::image_splits() const {
  std::map<std::string, Split, std::less<>> out;
  for (const auto& p : pairs) out.emplace(p.image_id, p.split);
  return out;
}

void validate_manifest(const DatasetManifest& manifest) {
  std::set<std::string_view> sentences;
  for (const auto& p : manifest.pairs) {
    if (p.sentence_id.empty() || p.image_id.empty()) throw ValidationError("manifest entry with empty id");
    if (!sentences.insert(p.sentence_id).second)
      throw ValidationError("sentence '" + p.sentence_id + "' appears more than once in the manifest");
  }
}

DatasetManifest parse_manifest(std::istream& in) {
  DatasetManifest manifest;
  for_each_line(in, [&](std::string_view line, std::size_t line_no) {
    const auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    manifest.pairs.push_back({std::string(fields[0]), std::string(fields[1]), parse_split(fields[2])});
  });
  validate_manifest(manifest);
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_manifest(in);
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  validate_manifest(manifest);
  auto out = open_out(path);
  for (const auto& p : manifest.pairs) out << p.sentence_id << '\t' << p.image_id << '\t' << to_string(p.split) << '\n';
  if (!out) throw FormatError("write failed: " + path.string());
}

// --- containers --------------------------------------------------------------

const std::string& ContainerHeader::field(std::string_view key) const {
  const auto it = fields.find(key);
  if (it == fields.end()) throw FormatError(magic + " header lacks field '" + std::string(key) + "'");
  return it->second;
}

std::size_t ContainerHeader::count_field(std::string_view key) const {
  const auto& v = field(key);
  return parse_index(v, 1);
}

void write_container_header(std::ostream& out, std::string_view magic, std::string_view version,
                            const std::vector<std::pair<std::string, std::string>>& fields) {
  out << magic << ' ' << version;
  for (const auto& [k, v] : fields) out << ' ' << k << '=' << v;
  out << '\n';
}

ContainerHeader read_container_header(std::istream& in, std::string_view expected_magic) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing container header");
  std::istringstream tokens(line);
  ContainerHeader h;
  tokens >> h.magic >> h.version;
  if (h.magic != expected_magic)
    throw FormatError("expected " + std::string(expected_magic) + " container, found '" + h.magic + "'");
  if (h.version != "v1") throw FormatError("unsupported container version '" + h.version + "'");
  std::string kv;
  while (tokens >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw FormatError("bad header field '" + kv + "'");
    h.fields.emplace(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return h;
}

}  // namespace hglmm
