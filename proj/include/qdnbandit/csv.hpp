#pragma once

// Minimal RFC-4180 CSV reading and writing. Numbers are written in the
// shortest form that round-trips, so reruns produce identical bytes.

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace qdnbandit {

/// Quotes a field if it contains a comma, quote, CR or LF.
std::string csv_escape(std::string_view field);

std::string csv_number(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
};

/// Parses a whole CSV document. Throws std::runtime_error on an unterminated
/// quoted field.
std::vector<std::vector<std::string>> read_csv(std::istream& in);

}  // namespace qdnbandit
