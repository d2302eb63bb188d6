#include "fluidrisk/csv.hpp"

#include <charconv>
#include <cmath>

namespace fluidrisk {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void CsvWriter::header(std::initializer_list<std::string> names) {
  for (const auto& n : names) field(n);
  end_row();
}

CsvWriter& CsvWriter::field(const std::string& s) {
  if (!first_) os_ << ',';
  first_ = false;
  if (s.find_first_of(",\"\n\r") == std::string::npos) {
    os_ << s;
  } else {
    os_ << '"';
    for (char c : s) {
      if (c == '"') os_ << '"';
      os_ << c;
    }
    os_ << '"';
  }
  return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_double(v)); }

CsvWriter& CsvWriter::field(long long v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
  os_ << '\n';
  first_ = true;
}

}  // namespace fluidrisk
