#include "xcap/metrics.hpp"

namespace xcap {

const std::set<std::string>& builtin_stop_words() {
  static const std::set<std::string> words = {
      "a",       "about",  "above",  "after",  "again",  "all",    "an",
      "and",     "any",    "are",    "as",     "at",     "be",     "because",
      "been",    "before", "behind", "being",  "below",  "beside", "between",
      "both",    "but",    "by",     "down",   "during", "each",   "few",
      "for",     "from",   "front",  "further","had",    "has",    "have",
      "he",      "her",    "here",   "hers",   "him",    "his",    "how",
      "i",       "if",     "in",     "inside", "into",   "is",     "it",
      "its",     "itself", "just",   "left",   "more",   "most",   "my",
      "near",    "next",   "no",     "nor",    "not",    "now",    "of",
      "off",     "on",     "once",   "only",   "or",     "other",  "our",
      "out",     "over",   "own",    "right",  "same",   "she",    "sitting",
      "so",      "some",   "standing","such",  "than",   "that",   "the",
      "their",   "theirs", "them",   "then",   "there",  "these",  "they",
      "this",    "those",  "through","to",     "too",    "under",  "until",
      "up",      "upon",   "very",   "was",    "we",     "were",   "what",
      "when",    "where",  "which",  "while",  "who",    "whom",   "why",
      "with",    "you",    "your",   "<start>","<end>",  "<unk>",
  };
  return words;
}

}  // namespace xcap
