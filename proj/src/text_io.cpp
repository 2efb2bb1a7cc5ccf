#include "preasp/text_io.hpp"

#include "preasp/types.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace preasp::text_io {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double parse_double(const std::string& token) {
  const std::string t = trim(token);
  if (t.empty()) throw FormatError("expected a number, got an empty field");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) {
    throw FormatError("not a number: '" + token + "'");
  }
  return v;
}

long parse_long(const std::string& token) {
  const std::string t = trim(token);
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
    throw FormatError("not an integer: '" + token + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == sep) {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

void write_row(std::ostream& out, const std::string& key,
               const Eigen::Ref<const Eigen::RowVectorXd>& values) {
  out << key;
  for (Eigen::Index i = 0; i < values.size(); ++i) out << ' ' << format_double(values[i]);
  out << '\n';
}

namespace {

std::vector<std::string> next_tokens(std::istream& in, const std::string& key) {
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.front() != key) {
      throw FormatError("expected '" + key + "', found '" + tokens.front() + "'");
    }
    tokens.erase(tokens.begin());
    return tokens;
  }
  throw FormatError("unexpected end of file while looking for '" + key + "'");
}

}  // namespace

std::vector<double> read_row(std::istream& in, const std::string& key) {
  std::vector<double> values;
  for (const auto& tok : next_tokens(in, key)) values.push_back(parse_double(tok));
  return values;
}

std::string read_value(std::istream& in, const std::string& key) {
  const auto tokens = next_tokens(in, key);
  if (tokens.size() != 1) throw FormatError("expected exactly one value for '" + key + "'");
  return tokens.front();
}

}  // namespace preasp::text_io
