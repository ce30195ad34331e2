#include "widthlab/csv.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "widthlab/errors.hpp"

namespace widthlab {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path)
    : path_(path), tmp_path_(path + ".tmp") {
  buf_.reserve(1 << 16);
}

CsvWriter::~CsvWriter() {
  if (!closed_) close();
}

void CsvWriter::field(const std::string& s) {
  if (!first_in_row_) buf_ += ',';
  buf_ += s;
  first_in_row_ = false;
}

void CsvWriter::end_row() {
  buf_ += '\n';
  first_in_row_ = true;
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (const auto& f : fields) field(f);
  end_row();
}

void CsvWriter::close() {
  closed_ = true;
  {
    std::ofstream out(tmp_path_, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("csv: cannot open " + tmp_path_);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error("csv: short write to " + tmp_path_);
  }
  std::filesystem::rename(tmp_path_, path_);
}

}  // namespace widthlab
