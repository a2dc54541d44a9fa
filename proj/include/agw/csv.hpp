#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace agw {

/// Header plus string cells; no quoting (all writers in this project emit
/// plain tokens).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Throws SchemaMismatch naming the column when absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text);

/// Shortest round-trip decimal; NaN renders as "NA".
std::string format_double(double value);

/// Parses a cell written by format_double; "NA" and "" give NaN.
double parse_double(std::string_view cell);
long long parse_int(std::string_view cell);

/// Writes to `<path>.tmp` and renames onto `path` on commit(); an
/// uncommitted writer removes its temp file.
class AtomicWriter {
 public:
  explicit AtomicWriter(std::filesystem::path path);
  ~AtomicWriter();
  AtomicWriter(const AtomicWriter&) = delete;
  AtomicWriter& operator=(const AtomicWriter&) = delete;

  std::ostream& stream() { return out_; }
  void commit();

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

}  // namespace agw
