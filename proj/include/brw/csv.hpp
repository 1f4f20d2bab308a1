#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace brw::csv {

// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

inline std::string quote(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
  }

  Writer& header(const std::vector<std::string>& cols) {
    for (const auto& c : cols) field(c);
    return end_row();
  }
  Writer& field(std::string_view s) {
    sep();
    out_ << quote(s);
    return *this;
  }
  Writer& field(const char* s) { return field(std::string_view(s)); }
  Writer& field(const std::string& s) { return field(std::string_view(s)); }
  Writer& field(double v) {
    sep();
    out_ << format_double(v);
    return *this;
  }
  template <class I>
    requires std::is_integral_v<I>
  Writer& field(I v) {
    sep();
    out_ << v;
    return *this;
  }
  Writer& field(bool v) {
    sep();
    out_ << (v ? "true" : "false");
    return *this;
  }
  Writer& end_row() {
    out_ << "\r\n";
    first_ = true;
    return *this;
  }
  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("csv write failed");
  }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }
  std::ofstream out_;
  bool first_ = true;
};

inline std::vector<std::string> coord_columns(const std::string& prefix, int dim) {
  std::vector<std::string> c;
  for (int k = 1; k <= dim; ++k) c.push_back(prefix + std::to_string(k));
  return c;
}

}  // namespace brw::csv
