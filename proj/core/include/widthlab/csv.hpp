#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace widthlab {

/// Shortest round-trip decimal form of a double (via std::to_chars), so CSV
/// output is locale-independent and byte-identical across reruns.
std::string format_double(double v);

/// Line-buffered CSV writer.  Writes through a temporary file and renames on
/// close, so readers never observe a partial file.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  ~CsvWriter();

  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void field(const std::string& s);
  void field(const char* s) { field(std::string(s)); }
  void field(double v) { field(format_double(v)); }
  void field(int v) { field(std::to_string(v)); }
  void field(std::int64_t v) { field(std::to_string(v)); }
  void field(std::uint64_t v) { field(std::to_string(v)); }
  void end_row();

  void row(const std::vector<std::string>& fields);

  /// Flush and atomically move into place.  Called by the destructor if not
  /// called explicitly.
  void close();

 private:
  std::string path_;
  std::string tmp_path_;
  std::string buf_;
  bool first_in_row_ = true;
  bool closed_ = false;
};

}  // namespace widthlab
