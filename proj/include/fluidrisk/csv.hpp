#pragma once

#include <initializer_list>
#include <ostream>
#include <string>
#include <vector>

namespace fluidrisk {

// 17 significant digits (general format), '.' decimal,
// independent of the global locale.
std::string format_double(double v);

// Minimal CSV writer; fields containing ',', '"' or newlines are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  void header(std::initializer_list<std::string> names);
  CsvWriter& field(const std::string& s);
  CsvWriter& field(double v);
  CsvWriter& field(long long v);
  CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(long v) { return field(static_cast<long long>(v)); }
  void end_row();

 private:
  std::ostream& os_;
  bool first_ = true;
};

}  // namespace fluidrisk
