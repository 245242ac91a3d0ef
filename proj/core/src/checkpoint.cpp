#include "xcap/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "xcap/tensor_io.hpp"

namespace xcap {

namespace fs = std::filesystem;

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad config line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write_key_values(const std::string& path,
                      const std::map<std::string, std::string>& kv) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write config: " + path);
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
}

void save_checkpoint(const std::string& dir, const CaptionerParams& params,
                     const Vocabulary& vocab,
                     const std::map<std::string, std::string>& extra) {
  fs::create_directories(dir);
  save_tensor_table((fs::path(dir) / "params.xckp").string(), params.tensors);
  vocab.save((fs::path(dir) / "vocab.txt").string());
  std::map<std::string, std::string> kv = params.cfg.to_key_values();
  for (const auto& [k, v] : extra) kv[k] = v;
  write_key_values((fs::path(dir) / "config.txt").string(), kv);
}

Checkpoint load_checkpoint(const std::string& dir) {
  Checkpoint ck;
  auto kv = read_key_values((fs::path(dir) / "config.txt").string());
  ck.params.cfg = CaptionerConfig::from_key_values(kv);
  ck.params.tensors = load_tensor_table((fs::path(dir) / "params.xckp").string());
  ck.vocab = Vocabulary::load((fs::path(dir) / "vocab.txt").string());
  ck.extra = kv;
  if (ck.params.cfg.vocab_size != ck.vocab.size()) {
    throw std::runtime_error("checkpoint vocabulary does not match the model config");
  }
  return ck;
}

}  // namespace xcap
