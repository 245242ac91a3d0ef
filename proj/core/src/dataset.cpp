#include "xcap/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "xcap/tensor_io.hpp"

namespace xcap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string image_path(const std::string& dir, int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.xtsr", id);
  return (fs::path(dir) / "images" / buf).string();
}

}  // namespace

void save_dataset(const std::string& dir, const SyntheticDataset& data) {
  fs::create_directories(fs::path(dir) / "images");

  json manifest;
  manifest["n"] = data.manifest.n;
  manifest["bias_rate"] = data.manifest.bias_rate;
  manifest["seed"] = data.manifest.seed;
  manifest["vocab_min_count"] = data.manifest.vocab_min_count;
  manifest["image_size"] = data.manifest.image_size;
  manifest["splits"]["train"] = data.manifest.train_ids;
  manifest["splits"]["val"] = data.manifest.val_ids;
  manifest["splits"]["test"] = data.manifest.test_ids;
  manifest["hash"] = data.manifest.hash;
  {
    std::ofstream os(fs::path(dir) / "manifest.json");
    if (!os) throw std::runtime_error("cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";
  }

  std::ofstream index(fs::path(dir) / "index.jsonl");
  std::ofstream boxes(fs::path(dir) / "boxes.txt");
  if (!index || !boxes) throw std::runtime_error("cannot write index in " + dir);
  for (const SyntheticScene& s : data.scenes) {
    json line;
    line["id"] = s.id;
    json caps = json::array();
    for (const auto& c : s.captions) caps.push_back(join_words(c));
    line["captions"] = caps;
    json jboxes = json::array();
    for (const auto& o : s.objects) {
      jboxes.push_back(json::array({o.shape, o.box.x0, o.box.y0, o.box.x1, o.box.y1}));
      boxes << s.id << " " << o.shape << " " << o.box.x0 << " " << o.box.y0 << " "
            << o.box.x1 << " " << o.box.y1 << "\n";
    }
    line["boxes"] = jboxes;
    line["split"] = s.split;
    line["biased"] = s.biased;
    line["colors"] = [&] {
      json arr = json::array();
      for (const auto& o : s.objects) arr.push_back(o.color);
      return arr;
    }();
    index << line.dump() << "\n";
    save_tensor(image_path(dir, s.id), s.image);
  }
  save_word_list((fs::path(dir) / "object_words.txt").string(),
                 object_word_list(data, static_cast<int>(shape_names().size())));
}

SyntheticDataset load_dataset(const std::string& dir) {
  SyntheticDataset data;
  {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw std::runtime_error("cannot open manifest in " + dir);
    json manifest = json::parse(is);
    data.manifest.n = manifest.at("n").get<int>();
    data.manifest.bias_rate = manifest.at("bias_rate").get<double>();
    data.manifest.seed = manifest.at("seed").get<uint64_t>();
    data.manifest.vocab_min_count = manifest.at("vocab_min_count").get<int>();
    data.manifest.image_size = manifest.at("image_size").get<int>();
    data.manifest.train_ids = manifest.at("splits").at("train").get<std::vector<int>>();
    data.manifest.val_ids = manifest.at("splits").at("val").get<std::vector<int>>();
    data.manifest.test_ids = manifest.at("splits").at("test").get<std::vector<int>>();
    data.manifest.hash = manifest.at("hash").get<std::string>();
  }

  std::ifstream index(fs::path(dir) / "index.jsonl");
  if (!index) throw std::runtime_error("cannot open index in " + dir);
  std::string linestr;
  while (std::getline(index, linestr)) {
    if (linestr.empty()) continue;
    json line = json::parse(linestr);
    SyntheticScene s;
    s.id = line.at("id").get<int>();
    for (const auto& c : line.at("captions")) {
      s.captions.push_back(split_words(c.get<std::string>()));
    }
    auto colors = line.value("colors", json::array());
    size_t oi = 0;
    for (const auto& b : line.at("boxes")) {
      SceneObject o;
      o.shape = b.at(0).get<std::string>();
      o.box = BBox{b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>(),
                   b.at(4).get<int>()};
      if (oi < colors.size()) o.color = colors[oi].get<std::string>();
      s.objects.push_back(std::move(o));
      ++oi;
    }
    s.split = line.at("split").get<std::string>();
    s.biased = line.value("biased", false);
    s.image = load_tensor(image_path(dir, s.id));
    data.scenes.push_back(std::move(s));
  }
  std::sort(data.scenes.begin(), data.scenes.end(),
            [](const SyntheticScene& a, const SyntheticScene& b) { return a.id < b.id; });
  return data;
}

std::map<int, std::vector<std::pair<std::string, BBox>>> load_bbox_annotations(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open bbox annotations: " + path);
  std::map<int, std::vector<std::pair<std::string, BBox>>> out;
  int id;
  std::string word;
  BBox b;
  while (is >> id >> word >> b.x0 >> b.y0 >> b.x1 >> b.y1) {
    out[id].emplace_back(word, b);
  }
  return out;
}

std::vector<std::string> object_word_list(const SyntheticDataset& data, int top_k) {
  std::map<std::string, int> counts;
  for (const SyntheticScene& s : data.scenes) {
    if (s.split != "train") continue;
    for (const auto& cap : s.captions) {
      for (const auto& w : cap) {
        if (std::find(shape_names().begin(), shape_names().end(), w) != shape_names().end()) {
          counts[w] += 1;
        }
      }
    }
  }
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (const auto& [w, c] : ranked) {
    if (static_cast<int>(out.size()) >= top_k) break;
    out.push_back(w);
  }
  return out;
}

std::vector<std::string> load_word_list(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open word list: " + path);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

void save_word_list(const std::string& path, const std::vector<std::string>& words) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write word list: " + path);
  for (const auto& w : words) os << w << "\n";
}

Vocabulary build_vocab(const SyntheticDataset& data, int min_count) {
  std::vector<std::vector<std::string>> caps;
  for (const SyntheticScene& s : data.scenes) {
    if (s.split != "train") continue;
    for (const auto& c : s.captions) caps.push_back(c);
  }
  return Vocabulary::build(caps, min_count);
}

std::vector<TrainSample> to_train_samples(const SyntheticDataset& data,
                                          const Vocabulary& vocab,
                                          const std::string& split) {
  std::vector<TrainSample> out;
  for (const SyntheticScene& s : data.scenes) {
    if (s.split != split) continue;
    TrainSample t;
    t.id = s.id;
    t.input = s.image;
    for (const auto& c : s.captions) {
      t.captions.push_back(vocab.encode(c));
      t.ref_words.push_back(c);
    }
    out.push_back(std::move(t));
  }
  return out;
}

const SyntheticScene& scene_by_id(const SyntheticDataset& data, int id) {
  for (const SyntheticScene& s : data.scenes) {
    if (s.id == id) return s;
  }
  throw std::out_of_range("no scene with id " + std::to_string(id));
}

}  // namespace xcap
