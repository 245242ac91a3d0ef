#include "xcap/metrics.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace xcap {

CorrectnessResult correctness(const Tensor& e, const std::vector<BBox>& boxes,
                              RelevanceSign sign) {
  if (e.rank() != 2) throw DimensionError("correctness: map must be (h,w)");
  if (boxes.empty()) throw std::invalid_argument("correctness: need at least one box");
  int h = e.extent(0), w = e.extent(1);
  for (const BBox& b : boxes) {
    if (!b.valid(w, h)) throw std::invalid_argument("correctness: box out of bounds");
  }

  // Sign filter, then normalization by the maximal absolute value. The
  // normalization cancels in the ratio but keeps the intermediate map in
  // [0,1] as defined.
  Tensor filtered({h, w});
  double mx = 0.0;
  for (int i = 0; i < e.numel(); ++i) {
    double v = sign == RelevanceSign::kPositive ? std::max(e[i], 0.0)
                                                : std::max(-e[i], 0.0);
    filtered[i] = v;
    mx = std::max(mx, v);
  }
  if (mx == 0.0) return {0.0, true};
  double total = 0.0, inside = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = filtered.at2(y, x) / mx;
      total += v;
      for (const BBox& b : boxes) {
        if (y >= b.y0 && y < b.y1 && x >= b.x0 && x < b.x1) {
          inside += v;
          break;
        }
      }
    }
  }
  return {inside / total, false};
}

double correctness_multihead(const std::vector<Tensor>& head_maps,
                             const std::vector<BBox>& boxes, RelevanceSign sign) {
  if (head_maps.empty()) throw std::invalid_argument("correctness_multihead: no maps");
  double best = 0.0;
  for (const Tensor& m : head_maps) {
    best = std::max(best, correctness(m, boxes, sign).value);
  }
  return best;
}

double auc_statistic(const std::vector<int>& labels, const std::vector<double>& stats) {
  if (labels.size() != stats.size()) {
    throw std::invalid_argument("auc_statistic: length mismatch");
  }
  size_t n = labels.size();
  size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("auc_statistic: labels must be 0/1");
    n_pos += static_cast<size_t>(l);
  }
  size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return 0.5;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return stats[a] < stats[b]; });

  // Average ranks over ties, then the Mann-Whitney statistic.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && stats[order[j + 1]] == stats[order[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile: q must be in [0,1]");
  std::sort(values.begin(), values.end());
  double pos = q * static_cast<double>(values.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

HeatmapStats heatmap_statistics(const Tensor& e) {
  if (e.numel() == 0) throw std::invalid_argument("heatmap_statistics: empty map");
  HeatmapStats s;
  s.max = e[0];
  double sum = 0.0;
  for (int i = 0; i < e.numel(); ++i) {
    s.max = std::max(s.max, e[i]);
    sum += e[i];
  }
  s.mean = sum / e.numel();
  std::vector<double> vals(e.vec());
  s.quantile5 = quantile(vals, 0.05);
  s.quantile50 = quantile(std::move(vals), 0.50);
  return s;
}

namespace {

bool caption_contains(const std::vector<std::string>& caption, const std::string& word) {
  return std::find(caption.begin(), caption.end(), word) != caption.end();
}

bool any_reference_contains(const std::vector<std::vector<std::string>>& refs,
                            const std::string& word) {
  for (const auto& r : refs) {
    if (caption_contains(r, word)) return true;
  }
  return false;
}

}  // namespace

MapResult map_frequent_words(
    const std::vector<std::vector<std::string>>& predictions,
    const std::vector<std::vector<std::vector<std::string>>>& references,
    const std::vector<std::string>& word_list) {
  if (predictions.size() != references.size()) {
    throw std::invalid_argument("map_frequent_words: sample count mismatch");
  }
  MapResult out;
  double sum = 0.0;
  for (const std::string& w : word_list) {
    WordPrecision wp;
    wp.word = w;
    for (size_t s = 0; s < predictions.size(); ++s) {
      if (!caption_contains(predictions[s], w)) continue;
      wp.predicted += 1;
      if (any_reference_contains(references[s], w)) wp.correct += 1;
    }
    if (wp.predicted > 0) {
      sum += static_cast<double>(wp.correct) / wp.predicted;
      out.words_counted += 1;
    }
    out.per_word.push_back(std::move(wp));
  }
  out.mean_precision = out.words_counted > 0 ? sum / out.words_counted : 0.0;
  return out;
}

namespace {

// N-grams are joined with a separator that cannot occur inside tokens.
void collect_ngrams(const std::vector<std::string>& words, int order,
                    std::unordered_map<std::string, int>& counts) {
  if (static_cast<int>(words.size()) < order) return;
  for (size_t i = 0; i + static_cast<size_t>(order) <= words.size(); ++i) {
    std::string key = std::to_string(order) + "|";
    for (int k = 0; k < order; ++k) {
      if (k) key += '\x1f';
      key += words[i + static_cast<size_t>(k)];
    }
    counts[key] += 1;
  }
}

}  // namespace

CiderScorer::CiderScorer(
    const std::vector<std::vector<std::vector<std::string>>>& ref_corpus) {
  if (ref_corpus.empty()) throw std::invalid_argument("cider: empty reference corpus");
  for (const auto& refs : ref_corpus) {
    std::unordered_map<std::string, int> seen;
    for (const auto& ref : refs) {
      for (int n = 1; n <= kMaxOrder; ++n) collect_ngrams(ref, n, seen);
    }
    for (const auto& [ngram, cnt] : seen) doc_freq_[ngram] += 1.0;
  }
  log_num_images_ = std::log(static_cast<double>(ref_corpus.size()));
}

double CiderScorer::score(const std::vector<std::string>& candidate,
                          const std::vector<std::vector<std::string>>& refs) const {
  if (refs.empty()) throw std::invalid_argument("cider: no references for sample");

  auto tfidf = [&](const std::vector<std::string>& sent, int order) {
    std::unordered_map<std::string, int> counts;
    collect_ngrams(sent, order, counts);
    std::unordered_map<std::string, double> vec;
    double norm_sq = 0.0;
    for (const auto& [ngram, cnt] : counts) {
      auto it = doc_freq_.find(ngram);
      double df = it == doc_freq_.end() ? 0.0 : it->second;
      double idf = log_num_images_ - std::log(std::max(1.0, df));
      double v = static_cast<double>(cnt) * idf;
      vec[ngram] = v;
      norm_sq += v * v;
    }
    return std::make_pair(std::move(vec), std::sqrt(norm_sq));
  };

  double total = 0.0;
  for (int n = 1; n <= kMaxOrder; ++n) {
    auto [cvec, cnorm] = tfidf(candidate, n);
    double order_score = 0.0;
    for (const auto& ref : refs) {
      auto [rvec, rnorm] = tfidf(ref, n);
      if (cnorm == 0.0 || rnorm == 0.0) continue;
      double dot = 0.0;
      for (const auto& [ngram, v] : cvec) {
        auto it = rvec.find(ngram);
        if (it != rvec.end()) dot += v * it->second;
      }
      order_score += dot / (cnorm * rnorm);
    }
    total += order_score / static_cast<double>(refs.size());
  }
  return 10.0 * total / kMaxOrder;
}

double CiderScorer::corpus_score(
    const std::vector<std::vector<std::string>>& candidates,
    const std::vector<std::vector<std::vector<std::string>>>& refs) const {
  if (candidates.size() != refs.size() || candidates.empty()) {
    throw std::invalid_argument("cider: candidate/reference count mismatch");
  }
  double sum = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) sum += score(candidates[i], refs[i]);
  return sum / static_cast<double>(candidates.size());
}

int min_count_heuristic(const std::vector<std::string>& caption,
                        const std::map<std::string, int>& train_counts,
                        const std::set<std::string>& stop_words) {
  int best = INT_MAX;
  for (const std::string& w : caption) {
    if (stop_words.count(w)) continue;
    auto it = train_counts.find(w);
    int c = it == train_counts.end() ? 0 : it->second;
    best = std::min(best, c);
  }
  return best;
}

std::set<std::string> load_stop_words(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open stop-word list: " + path);
  std::set<std::string> out;
  std::string w;
  while (is >> w) out.insert(w);
  return out;
}

}  // namespace xcap
