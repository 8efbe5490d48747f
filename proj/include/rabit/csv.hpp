#pragma once

// Minimal CSV emission with locale-independent, round-trip number
// formatting so identical runs produce identical bytes.

#include <cstdio>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace rabit::csv {

/// Shortest "%.{p}g" rendering (p <= 17) that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int p = 6; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void header(std::initializer_list<std::string_view> cols) {
    std::vector<std::string> v(cols.begin(), cols.end());
    header(v);
  }
  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) os_ << (i ? "," : "") << cols[i];
    os_ << '\n';
  }

  Writer& cell(double v) { return raw(format_double(v)); }
  Writer& cell(std::uint64_t v) { return raw(std::to_string(v)); }
  Writer& cell(int v) { return raw(std::to_string(v)); }
  Writer& cell(std::string_view s) { return raw(s); }
  Writer& cell(const char* s) { return raw(s); }
  void end_row() {
    os_ << '\n';
    first_ = true;
  }

 private:
  Writer& raw(std::string_view s) {
    if (!first_) os_ << ',';
    os_ << s;
    first_ = false;
    return *this;
  }

  std::ostream& os_;
  bool first_ = true;
};

}  // namespace rabit::csv
