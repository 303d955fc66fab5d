#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nhdiff::io {

// 17 significant digits with '.' as the decimal separator, whatever the locale.
std::string format_double(double v);

// RFC-4180 quoting: fields containing ',', '"', CR or LF are quoted with
// embedded quotes doubled. Records end in CRLF.
std::string csv_field(std::string_view s);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  CsvWriter& cell(double v);
  CsvWriter& cell(long long v);
  CsvWriter& cell(int v) { return cell(static_cast<long long>(v)); }
  CsvWriter& cell(long v) { return cell(static_cast<long long>(v)); }
  CsvWriter& cell(std::string_view s);
  // Throws std::logic_error when the row width differs from the header.
  void end_row();
  std::size_t rows() const { return rows_; }
  const std::string& str() const { return out_; }

 private:
  std::size_t width_ = 0, pending_ = 0, rows_ = 0;
  std::string out_;
  std::string row_;
};

// FNV-1a 64-bit, as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t h);

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::uintmax_t bytes = 0;
  std::string checksum;  // fnv1a64 of the content
};

// Writes content to dir/name in binary mode, creating dir if needed.
ManifestEntry write_text(const std::filesystem::path& dir, const std::string& name, std::string_view content);

}  // namespace nhdiff::io
