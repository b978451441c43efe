#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace geochem::csv {

/// Splits one CSV record on commas. Double-quoted fields may contain commas
/// and "" escapes. Surrounding whitespace is trimmed from unquoted fields.
std::vector<std::string> split_record(std::string_view line);

/// Quotes a field only when it contains a comma, quote or newline.
std::string escape_field(std::string_view field);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_exact(double value);

/// Fixed number of significant digits, used for human-facing score columns.
std::string format_significant(double value, int digits);

/// Parses a full-width numeric field. Returns false on garbage or trailing text.
bool parse_double(std::string_view text, double& out);

/// Reads every line of a text file, stripping a UTF-8 BOM and trailing CR.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace geochem::csv
