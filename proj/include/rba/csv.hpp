#pragma once

#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rba {

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// RFC 4180 reader: comma separated, double-quoted fields may contain
/// commas, quotes ("") and line breaks. Accepts LF or CRLF record ends.
class CsvReader {
public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  /// Next record, or nullopt at end of input. Throws CsvError on an
  /// unterminated quoted field.
  std::optional<std::vector<std::string>> next();

  /// 1-based number of the record last returned.
  std::size_t record_number() const { return record_; }

private:
  std::istream& in_;
  std::size_t record_ = 0;
};

/// Quotes the field only when it contains a comma, quote or line break.
std::string csv_escape(std::string_view field);

}  // namespace rba
