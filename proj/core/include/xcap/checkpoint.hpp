#pragma once

#include "xcap/captioner.hpp"
#include "xcap/vocab.hpp"

namespace xcap {

// Checkpoint directory: params.xckp (named tensor table), config.txt
// (key=value lines: model config, vocabulary threshold, seed), vocab.txt.
struct Checkpoint {
  CaptionerParams params;
  Vocabulary vocab;
  std::map<std::string, std::string> extra;  // seed, vocab_min_count, ...
};

void save_checkpoint(const std::string& dir, const CaptionerParams& params,
                     const Vocabulary& vocab,
                     const std::map<std::string, std::string>& extra);

Checkpoint load_checkpoint(const std::string& dir);

std::map<std::string, std::string> read_key_values(const std::string& path);
void write_key_values(const std::string& path,
                      const std::map<std::string, std::string>& kv);

}  // namespace xcap
