#include "agw/csv.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "agw/error.hpp"

namespace agw {

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw Error(ErrorCode::SchemaMismatch, "missing column '" + std::string(name) + "'");
}

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.emplace_back(trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  std::size_t start = 0;
  bool first = true;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    if (first) {
      table.header = split(line, ',');
      first = false;
      continue;
    }
    auto cells = split(line, ',');
    if (cells.size() != table.header.size())
      throw Error(ErrorCode::SchemaMismatch, "row has " + std::to_string(cells.size()) +
                                                 " cells, header has " +
                                                 std::to_string(table.header.size()));
    table.rows.push_back(std::move(cells));
  }
  if (first) throw Error(ErrorCode::SchemaMismatch, "empty CSV");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

std::string format_double(double value) {
  if (std::isnan(value)) return "NA";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

double parse_double(std::string_view cell) {
  cell = trim(cell);
  if (cell.empty() || cell == "NA" || cell == "nan" || cell == "NaN")
    return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw Error(ErrorCode::SchemaMismatch, "not a number: '" + std::string(cell) + "'");
  return v;
}

long long parse_int(std::string_view cell) {
  cell = trim(cell);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw Error(ErrorCode::SchemaMismatch, "not an integer: '" + std::string(cell) + "'");
  return v;
}

AtomicWriter::AtomicWriter(std::filesystem::path path) : path_(std::move(path)) {
  tmp_ = path_;
  tmp_ += ".tmp";
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  out_.open(tmp_, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorCode::IoFailure, "cannot write " + path_.string());
}

AtomicWriter::~AtomicWriter() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_, ec);
  }
}

void AtomicWriter::commit() {
  out_.flush();
  if (!out_) throw Error(ErrorCode::IoFailure, "write failed for " + path_.string());
  out_.close();
  std::error_code ec;
  std::filesystem::rename(tmp_, path_, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "rename to " + path_.string() + ": " + ec.message());
  committed_ = true;
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  AtomicWriter w(path);
  w.stream() << text;
  w.commit();
}

}  // namespace agw
