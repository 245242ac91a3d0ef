#include "xcap/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "xcap/synthetic.hpp"
#include "xcap/tensor.hpp"

namespace xcap {

std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

TsvReport::TsvReport(const std::string& path, const std::string& config_hash,
                     const std::vector<std::string>& columns)
    : os_(path), n_cols_(columns.size()) {
  if (!os_) throw std::runtime_error("cannot open report for writing: " + path);
  os_ << "# config_hash=" << config_hash << "\n";
  for (size_t i = 0; i < columns.size(); ++i) {
    if (i) os_ << '\t';
    os_ << columns[i];
  }
  os_ << "\n";
}

void TsvReport::row(const std::vector<std::string>& cells) {
  if (in_summary_) throw std::logic_error("report rows must precede the summary");
  if (cells.size() != n_cols_) throw std::invalid_argument("report row arity mismatch");
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) os_ << '\t';
    os_ << cells[i];
  }
  os_ << "\n";
}

void TsvReport::summary(const std::string& key, const std::string& value) {
  if (!in_summary_) {
    os_ << "# summary\n";
    in_summary_ = true;
  }
  os_ << "# " << key << "=" << value << "\n";
}

void TsvReport::close() { os_.close(); }

std::string config_hash(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::vector<std::pair<std::string, std::string>> pairs = kv;
  std::sort(pairs.begin(), pairs.end());
  std::string canon;
  for (const auto& [k, v] : pairs) {
    canon += k;
    canon += '=';
    canon += v;
    canon += ';';
  }
  return hash_hex(fnv1a(canon));
}

void write_pgm(const std::string& path, const Tensor& map) {
  if (map.rank() != 2) throw DimensionError("write_pgm: map must be 2-d");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  int h = map.extent(0), w = map.extent(1);
  std::fprintf(f, "P5\n%d %d\n255\n", w, h);
  double mx = map.max_abs();
  for (int i = 0; i < map.numel(); ++i) {
    double v = mx > 0.0 ? map[i] / mx : 0.0;  // [-1, 1] around mid gray
    int byte = static_cast<int>(std::lround(127.5 + 127.5 * v));
    unsigned char b = static_cast<unsigned char>(std::clamp(byte, 0, 255));
    std::fwrite(&b, 1, 1, f);
  }
  std::fclose(f);
}

void write_csv_matrix(const std::string& path, const Tensor& map) {
  if (map.rank() != 2) throw DimensionError("write_csv_matrix: map must be 2-d");
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  int h = map.extent(0), w = map.extent(1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fprintf(f, "%s%.12g", x ? "," : "", map.at2(y, x));
    }
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

}  // namespace xcap
