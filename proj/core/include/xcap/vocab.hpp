#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace xcap {

// Token <-> id maps with <start>/<end>/<unk> specials. Ids are dense from 0;
// tokens seen fewer than min_count times map to <unk>.
class Vocabulary {
 public:
  static constexpr const char* kStart = "<start>";
  static constexpr const char* kEnd = "<end>";
  static constexpr const char* kUnk = "<unk>";

  Vocabulary() = default;

  static Vocabulary build(const std::vector<std::vector<std::string>>& captions,
                          int min_count);

  int size() const { return static_cast<int>(tokens_.size()); }
  int start_id() const { return 0; }
  int end_id() const { return 1; }
  int unk_id() const { return 2; }

  // Unknown tokens resolve to <unk>.
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  // Raw training-corpus counts, including tokens below the threshold.
  const std::map<std::string, int>& counts() const { return counts_; }
  int count_of(const std::string& token) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  std::map<std::string, int> counts_;
};

std::vector<std::string> split_words(const std::string& line);
std::string join_words(const std::vector<std::string>& words);

}  // namespace xcap
