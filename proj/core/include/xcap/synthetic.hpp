#pragma once

#include <string>
#include <vector>

#include "xcap/metrics.hpp"
#include "xcap/rng.hpp"
#include "xcap/tensor.hpp"

namespace xcap {

// Procedural scenes: one colored shape on a noisy background, described by
// two template captions. A controllable fraction of training captions also
// mentions a co-occurring companion object that is absent from the image;
// the bias concentrates on fixed (color, shape) contexts so a decoder can
// pick the spurious continuation up as a language prior.
struct SceneObject {
  std::string shape;
  std::string color;
  BBox box;
};

struct SyntheticScene {
  int id = 0;
  Tensor image;  // (3, size, size), values in [0,1]
  std::vector<SceneObject> objects;
  std::vector<std::vector<std::string>> captions;
  bool biased = false;  // some caption mentions an absent object
  std::string split;    // train | val | test

  bool has_object_word(const std::string& word) const {
    for (const auto& o : objects) {
      if (o.shape == word) return true;
    }
    return false;
  }
};

struct DatasetManifest {
  int n = 0;
  double bias_rate = 0.0;
  uint64_t seed = 0;
  int vocab_min_count = 1;
  int image_size = 32;
  std::vector<int> train_ids, val_ids, test_ids;
  std::string hash;  // over the canonical field string, set by the generator

  std::string canonical() const;
};

const std::vector<std::string>& shape_names();
const std::vector<std::string>& color_names();
// Spurious companion mentioned by biased captions of a trigger shape.
const std::string& companion_shape(const std::string& shape);

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<SyntheticScene> scenes;
};

SyntheticDataset generate_dataset(int n, double bias_rate, uint64_t seed,
                                  int image_size = 32);

// Mean pixel color over the training split, the ablation fill value.
Tensor training_mean_color(const SyntheticDataset& data);

uint64_t fnv1a(const std::string& s);
std::string hash_hex(uint64_t h);

}  // namespace xcap
