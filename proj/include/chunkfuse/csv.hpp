#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace chunkfuse::csv {

using Row = std::vector<std::string>;

// Streaming RFC-4180 reader: comma delimiter, double-quote quoting with ""
// escapes, quoted fields may span lines, CRLF or LF record ends.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Next record, or nullopt at end of input. Throws DataError on an
  // unterminated quoted field.
  std::optional<Row> next();

  // 1-based line number where the last returned record started.
  std::size_t record_line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 0;
};

std::string escape_field(std::string_view field);
void write_row(std::ostream& out, const Row& row);

}  // namespace chunkfuse::csv
