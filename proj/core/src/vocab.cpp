#include "xcap/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace xcap {

std::vector<std::string> split_words(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& captions,
                             int min_count) {
  Vocabulary v;
  for (const auto& cap : captions) {
    for (const auto& w : cap) v.counts_[w] += 1;
  }
  v.tokens_ = {kStart, kEnd, kUnk};
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [tok, cnt] : v.counts_) {
    if (cnt >= min_count) kept.emplace_back(tok, cnt);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (auto& [tok, cnt] : kept) v.tokens_.push_back(tok);
  for (size_t i = 0; i < v.tokens_.size(); ++i) v.ids_[v.tokens_[i]] = static_cast<int>(i);
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? unk_id() : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return tokens_[static_cast<size_t>(id)];
}

int Vocabulary::count_of(const std::string& token) const {
  auto it = counts_.find(token);
  return it == counts_.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << size() << "\n";
  for (int i = 3; i < size(); ++i) os << tokens_[static_cast<size_t>(i)] << "\n";
  os << "#counts\n";
  for (const auto& [tok, cnt] : counts_) os << tok << " " << cnt << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  Vocabulary v;
  int n = 0;
  is >> n;
  std::string line;
  std::getline(is, line);
  v.tokens_ = {kStart, kEnd, kUnk};
  for (int i = 3; i < n; ++i) {
    if (!std::getline(is, line)) throw std::runtime_error("vocab file truncated");
    v.tokens_.push_back(line);
  }
  if (!std::getline(is, line) || line != "#counts") {
    throw std::runtime_error("vocab file missing counts section");
  }
  std::string tok;
  int cnt;
  while (is >> tok >> cnt) v.counts_[tok] = cnt;
  for (size_t i = 0; i < v.tokens_.size(); ++i) v.ids_[v.tokens_[i]] = static_cast<int>(i);
  return v;
}

}  // namespace xcap
