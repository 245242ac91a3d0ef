#pragma once

#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "xcap/tensor.hpp"

namespace xcap {

// Pixel-coordinate box, end-exclusive: 0 <= x0 < x1 <= w, 0 <= y0 < y1 <= h.
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool valid(int w, int h) const {
    return 0 <= x0 && x0 < x1 && x1 <= w && 0 <= y0 && y0 < y1 && y1 <= h;
  }
};

enum class RelevanceSign : uint8_t { kPositive, kNegative };

struct CorrectnessResult {
  double value = 0.0;
  bool empty_map = false;  // no mass left after the sign filter
};

// Share of sign-filtered, max-abs-normalized relevance mass inside the union
// of the boxes. In [0,1]; enlarging a box never decreases it.
CorrectnessResult correctness(const Tensor& e, const std::vector<BBox>& boxes,
                              RelevanceSign sign = RelevanceSign::kPositive);

// Maximum of the per-head correctness values.
double correctness_multihead(const std::vector<Tensor>& head_maps,
                             const std::vector<BBox>& boxes,
                             RelevanceSign sign = RelevanceSign::kPositive);

// Rank-based AUC (Mann-Whitney), ties counted half. Returns 0.5 when either
// class is empty.
double auc_statistic(const std::vector<int>& labels, const std::vector<double>& stats);

// Linear-interpolated empirical quantile, q in [0,1].
double quantile(std::vector<double> values, double q);

struct HeatmapStats {
  double max = 0.0;
  double mean = 0.0;
  double quantile5 = 0.0;
  double quantile50 = 0.0;
};
HeatmapStats heatmap_statistics(const Tensor& e);

// Per-word precision of object-word mentions: a prediction containing w
// counts as correct when the sample's reference set also contains w. The
// mean skips words that are never predicted. Values in [0,1].
struct WordPrecision {
  std::string word;
  int predicted = 0;
  int correct = 0;
};
struct MapResult {
  double mean_precision = 0.0;  // in [0,1]
  int words_counted = 0;
  std::vector<WordPrecision> per_word;
};
MapResult map_frequent_words(
    const std::vector<std::vector<std::string>>& predictions,
    const std::vector<std::vector<std::vector<std::string>>>& references,
    const std::vector<std::string>& word_list);

// TF-IDF n-gram consensus scorer (n = 1..4, cosine similarity per order,
// averaged over orders and references, scaled by 10). The IDF table comes
// from the reference corpus handed to the constructor.
class CiderScorer {
 public:
  explicit CiderScorer(const std::vector<std::vector<std::vector<std::string>>>& ref_corpus);

  double score(const std::vector<std::string>& candidate,
               const std::vector<std::vector<std::string>>& refs) const;

  // Mean score of aligned candidate/reference lists.
  double corpus_score(const std::vector<std::vector<std::string>>& candidates,
                      const std::vector<std::vector<std::vector<std::string>>>& refs) const;

 private:
  static constexpr int kMaxOrder = 4;
  std::unordered_map<std::string, double> doc_freq_;
  double log_num_images_ = 0.0;
};

// Minimum training-set count over the caption's non-stop words; INT_MAX when
// the caption has none.
int min_count_heuristic(const std::vector<std::string>& caption,
                        const std::map<std::string, int>& train_counts,
                        const std::set<std::string>& stop_words);

// Built-in English stop-word list; identical content ships as a data file.
const std::set<std::string>& builtin_stop_words();
std::set<std::string> load_stop_words(const std::string& path);

}  // namespace xcap
