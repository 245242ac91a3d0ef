#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace xcap {

std::string format_double(double v, int precision = 6);

// Tab-separated report with a provenance header carrying the config hash.
// Rows are written in a fixed column order; all numbers go through
// format_double so two identical runs produce byte-identical files.
class TsvReport {
 public:
  TsvReport(const std::string& path, const std::string& config_hash,
            const std::vector<std::string>& columns);

  void row(const std::vector<std::string>& cells);
  void summary(const std::string& key, const std::string& value);
  void close();

 private:
  std::ofstream os_;
  size_t n_cols_;
  bool in_summary_ = false;
};

// FNV-1a hex digest over sorted key=value pairs.
std::string config_hash(const std::vector<std::pair<std::string, std::string>>& kv);

// Heatmap emitters: binary 8-bit graymap (P5, max-abs scaled around 128) and
// a signed CSV matrix with full precision.
void write_pgm(const std::string& path, const class Tensor& map);
void write_csv_matrix(const std::string& path, const class Tensor& map);

}  // namespace xcap
