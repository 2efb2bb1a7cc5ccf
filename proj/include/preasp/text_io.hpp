#pragma once

#include <Eigen/Dense>

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace preasp::text_io {

/// Shortest text that reads back to the same double (17 significant digits).
std::string format_double(double value);

/// strtod over the whole token; throws FormatError on junk.
double parse_double(const std::string& token);
long parse_long(const std::string& token);

std::vector<std::string> split(const std::string& line, char sep);
std::vector<std::string> split_ws(const std::string& line);
std::string trim(const std::string& s);

void write_row(std::ostream& out, const std::string& key, const Eigen::Ref<const Eigen::RowVectorXd>& values);

/// Reads the next non-empty line and checks that it starts with `key`; returns the rest
/// of the tokens as doubles.
std::vector<double> read_row(std::istream& in, const std::string& key);

/// Reads `key value` and returns the value token.
std::string read_value(std::istream& in, const std::string& key);

}  // namespace preasp::text_io
