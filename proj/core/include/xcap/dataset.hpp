#pragma once

#include "xcap/synthetic.hpp"
#include "xcap/trainer.hpp"
#include "xcap/vocab.hpp"

namespace xcap {

// On-disk layout under a dataset directory:
//   manifest.json      generation parameters, split ids, manifest hash
//   index.jsonl        one scene per line: id, captions, boxes, split
//   images/NNNNNN.xtsr raw image tensors (3, size, size)
//   boxes.txt          `image_id word x0 y0 x1 y1` annotation lines
//   object_words.txt   object words by training-set frequency
void save_dataset(const std::string& dir, const SyntheticDataset& data);
SyntheticDataset load_dataset(const std::string& dir);

// Bounding-box annotation file, one box per line.
std::map<int, std::vector<std::pair<std::string, BBox>>> load_bbox_annotations(
    const std::string& path);

// Object words ranked by training-caption frequency.
std::vector<std::string> object_word_list(const SyntheticDataset& data, int top_k);
std::vector<std::string> load_word_list(const std::string& path);
void save_word_list(const std::string& path, const std::vector<std::string>& words);

// Vocabulary over the training captions.
Vocabulary build_vocab(const SyntheticDataset& data, int min_count);

// Training views of one split ("train", "val", "test").
std::vector<TrainSample> to_train_samples(const SyntheticDataset& data,
                                          const Vocabulary& vocab,
                                          const std::string& split);

const SyntheticScene& scene_by_id(const SyntheticDataset& data, int id);

}  // namespace xcap
