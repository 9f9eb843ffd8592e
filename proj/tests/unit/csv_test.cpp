#include <catch_amalgamated.hpp>

#include <sstream>

#include "chunkfuse/csv.hpp"
#include "chunkfuse/error.hpp"

using namespace chunkfuse;

TEST_CASE("csv reader handles quotes, embedded newlines and CRLF") {
  std::istringstream in("a,b,c\r\n\"x, y\",\"he said \"\"hi\"\"\",\"two\nlines\"\r\nlast,,\n");
  csv::Reader reader(in);
  auto r1 = reader.next();
  REQUIRE(r1);
  REQUIRE(*r1 == csv::Row{"a", "b", "c"});
  auto r2 = reader.next();
  REQUIRE(r2);
  REQUIRE(*r2 == csv::Row{"x, y", "he said \"hi\"", "two\nlines"});
  REQUIRE(reader.record_line() == 2);
  auto r3 = reader.next();
  REQUIRE(r3);
  REQUIRE(*r3 == csv::Row{"last", "", ""});
  REQUIRE(reader.record_line() == 4);
  REQUIRE_FALSE(reader.next());
}

TEST_CASE("unterminated quote is a data error") {
  std::istringstream in("a,\"open\n");
  csv::Reader reader(in);
  REQUIRE_THROWS_AS(reader.next(), DataError);
}

TEST_CASE("write_row round-trips through the reader") {
  const csv::Row row = {"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
  std::stringstream buf;
  csv::write_row(buf, row);
  csv::Reader reader(buf);
  REQUIRE(reader.next() == row);
  REQUIRE(csv::escape_field("plain") == "plain");
  REQUIRE(csv::escape_field("a\"b") == "\"a\"\"b\"");
}
