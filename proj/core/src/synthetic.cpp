#include "xcap/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace xcap {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> names = {"square", "triangle", "circle", "cross"};
  return names;
}

const std::vector<std::string>& color_names() {
  static const std::vector<std::string> names = {"red", "green", "blue", "yellow"};
  return names;
}

const std::string& companion_shape(const std::string& shape) {
  static const std::map<std::string, std::string> pairs = {
      {"square", "circle"}, {"circle", "square"}, {"triangle", "cross"},
      {"cross", "triangle"}};
  return pairs.at(shape);
}

std::string DatasetManifest::canonical() const {
  std::ostringstream os;
  os << "n=" << n << ";bias_rate=" << bias_rate << ";seed=" << seed
     << ";vocab_min_count=" << vocab_min_count << ";image_size=" << image_size;
  os << ";train=";
  for (int id : train_ids) os << id << ",";
  os << ";val=";
  for (int id : val_ids) os << id << ",";
  os << ";test=";
  for (int id : test_ids) os << id << ",";
  return os.str();
}

namespace {

std::array<double, 3> color_rgb(const std::string& color) {
  if (color == "red") return {0.90, 0.15, 0.15};
  if (color == "green") return {0.15, 0.80, 0.20};
  if (color == "blue") return {0.20, 0.30, 0.90};
  return {0.90, 0.85, 0.15};  // yellow
}

struct DrawResult {
  BBox box;
};

DrawResult draw_shape(Tensor& img, const std::string& shape, const std::string& color,
                      int quadrant, int quad_size, Rng& rng) {
  int qx = (quadrant % 2) * quad_size;
  int qy = (quadrant / 2) * quad_size;
  int side = quad_size - 5 + rng.uniform_int(3);  // 11..13 px for 16 px quadrants
  int ox = qx + 1 + rng.uniform_int(quad_size - side - 1);
  int oy = qy + 1 + rng.uniform_int(quad_size - side - 1);
  auto rgb = color_rgb(color);

  auto put = [&](int y, int x) {
    for (int c = 0; c < 3; ++c) {
      double v = rgb[static_cast<size_t>(c)] + rng.uniform(-0.05, 0.05);
      img.at3(c, y, x) = std::clamp(v, 0.0, 1.0);
    }
  };

  if (shape == "square") {
    for (int y = oy; y < oy + side; ++y) {
      for (int x = ox; x < ox + side; ++x) put(y, x);
    }
  } else if (shape == "circle") {
    double r = side / 2.0;
    double cx = ox + r, cy = oy + r;
    for (int y = oy; y < oy + side; ++y) {
      for (int x = ox; x < ox + side; ++x) {
        if ((x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy) <= r * r) {
          put(y, x);
        }
      }
    }
  } else if (shape == "triangle") {
    for (int row = 0; row < side; ++row) {
      int half = static_cast<int>(std::lround(0.5 * side * row / std::max(side - 1, 1)));
      int mid = ox + side / 2;
      for (int x = std::max(ox, mid - half); x <= std::min(ox + side - 1, mid + half); ++x) {
        put(oy + row, x);
      }
    }
  } else {  // cross
    int bar = std::max(side / 3, 3);
    int mid = (side - bar) / 2;
    for (int y = oy; y < oy + side; ++y) {
      for (int x = ox + mid; x < ox + mid + bar; ++x) put(y, x);
    }
    for (int y = oy + mid; y < oy + mid + bar; ++y) {
      for (int x = ox; x < ox + side; ++x) put(y, x);
    }
  }
  return {BBox{ox, oy, ox + side, oy + side}};
}

std::vector<std::string> clean_caption(int variant, const std::string& color,
                                       const std::string& shape) {
  if (variant == 0) return {"there", "is", "a", color, shape, "in", "the", "image"};
  return {"a", color, shape, "is", "in", "the", "image"};
}

// Bias priority of a (shape, color) context: lower ranks fill the bias quota
// first, so the spurious word dominates those contexts.
int context_priority(int shape_idx, int color_idx) { return shape_idx * 4 + color_idx; }

// Per-context share of biased captions, graded by the color rank inside each
// trigger shape. Every biased context stays clearly above the majority
// boundary (so the spurious word dominates it) while keeping a clean
// minority of the same context for counter-evidence.
double context_bias_cap(int priority) {
  static const double schedule[4] = {0.85, 0.75, 0.65, 0.55};
  return schedule[priority % 4];
}

}  // namespace

SyntheticDataset generate_dataset(int n, double bias_rate, uint64_t seed,
                                  int image_size) {
  if (n <= 0) throw std::invalid_argument("generate_dataset: n must be positive");
  if (bias_rate < 0.0 || bias_rate > 1.0) {
    throw std::invalid_argument("generate_dataset: bias_rate must be in [0,1]");
  }
  SyntheticDataset data;
  data.manifest.n = n;
  data.manifest.bias_rate = bias_rate;
  data.manifest.seed = seed;
  data.manifest.image_size = image_size;

  Rng rng(seed);
  int quad = image_size / 2;
  const auto& shapes = shape_names();
  const auto& colors = color_names();

  for (int id = 0; id < n; ++id) {
    Rng srng = rng.fork(static_cast<uint64_t>(id) + 1);
    SyntheticScene scene;
    scene.id = id;
    scene.image = Tensor({3, image_size, image_size});
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
          scene.image.at3(c, y, x) = 0.18 + srng.uniform(0.0, 0.06);
        }
      }
    }
    int shape_idx = srng.uniform_int(static_cast<int>(shapes.size()));
    int color_idx = srng.uniform_int(static_cast<int>(colors.size()));
    int quadrant = srng.uniform_int(4);
    SceneObject obj;
    obj.shape = shapes[static_cast<size_t>(shape_idx)];
    obj.color = colors[static_cast<size_t>(color_idx)];
    obj.box = draw_shape(scene.image, obj.shape, obj.color, quadrant, quad, srng).box;
    scene.objects.push_back(obj);
    scene.captions.push_back(clean_caption(0, obj.color, obj.shape));
    scene.captions.push_back(clean_caption(1, obj.color, obj.shape));
    data.scenes.push_back(std::move(scene));
  }

  // Splits over the id order: a large test share keeps the aggregate
  // evaluation statistics stable at this scale.
  int n_train = static_cast<int>(std::lround(0.55 * n));
  int n_val = static_cast<int>(std::lround(0.10 * n));
  if (n_train < 1) n_train = 1;
  for (int id = 0; id < n; ++id) {
    std::string split = id < n_train ? "train" : id < n_train + n_val ? "val" : "test";
    data.scenes[static_cast<size_t>(id)].split = split;
    if (split == "train") data.manifest.train_ids.push_back(id);
    else if (split == "val") data.manifest.val_ids.push_back(id);
    else data.manifest.test_ids.push_back(id);
  }

  // Bias quota over training captions. A biased caption names the absent
  // companion shape instead of the drawn one, so the spurious object word is
  // the decision the decoder has to make from (color, shape) context. The
  // quota fills contexts in priority order, each capped so clean examples of
  // the same context survive; a second pass lifts the cap for rates beyond
  // the cap (bias_rate = 1 biases everything).
  struct CaptionRef {
    int scene_id;
    int caption_idx;
    int priority;
  };
  std::vector<CaptionRef> train_caps;
  for (int id : data.manifest.train_ids) {
    const SyntheticScene& s = data.scenes[static_cast<size_t>(id)];
    int sh = static_cast<int>(std::find(shapes.begin(), shapes.end(), s.objects[0].shape) -
                              shapes.begin());
    int co = static_cast<int>(std::find(colors.begin(), colors.end(), s.objects[0].color) -
                              colors.begin());
    for (int ci = 0; ci < 2; ++ci) {
      train_caps.push_back({id, ci, context_priority(sh, co)});
    }
  }
  std::stable_sort(train_caps.begin(), train_caps.end(),
                   [](const CaptionRef& a, const CaptionRef& b) {
                     if (a.priority != b.priority) return a.priority < b.priority;
                     if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
                     return a.caption_idx < b.caption_idx;
                   });
  int quota = static_cast<int>(std::lround(bias_rate * static_cast<double>(train_caps.size())));
  std::map<int, int> group_size, group_used;
  for (const CaptionRef& ref : train_caps) group_size[ref.priority] += 1;
  auto apply_bias = [&](const CaptionRef& ref) {
    SyntheticScene& s = data.scenes[static_cast<size_t>(ref.scene_id)];
    const SceneObject& obj = s.objects[0];
    s.captions[static_cast<size_t>(ref.caption_idx)] =
        clean_caption(ref.caption_idx, obj.color, companion_shape(obj.shape));
    s.biased = true;
  };
  int used = 0;
  std::vector<char> taken(train_caps.size(), 0);
  for (size_t i = 0; i < train_caps.size() && used < quota; ++i) {
    const CaptionRef& ref = train_caps[i];
    int cap = static_cast<int>(
        std::ceil(context_bias_cap(ref.priority) * group_size[ref.priority]));
    if (group_used[ref.priority] >= cap) continue;
    group_used[ref.priority] += 1;
    taken[i] = 1;
    apply_bias(ref);
    ++used;
  }
  for (size_t i = 0; i < train_caps.size() && used < quota; ++i) {
    if (taken[i]) continue;
    apply_bias(train_caps[i]);
    ++used;
  }

  data.manifest.hash = hash_hex(fnv1a(data.manifest.canonical()));
  return data;
}

Tensor training_mean_color(const SyntheticDataset& data) {
  Tensor mean({3});
  long count = 0;
  for (const SyntheticScene& s : data.scenes) {
    if (s.split != "train") continue;
    int hw = s.image.extent(1) * s.image.extent(2);
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (int i = 0; i < hw; ++i) sum += s.image.data()[c * hw + i];
      mean[c] += sum / hw;
    }
    ++count;
  }
  if (count == 0) throw std::invalid_argument("training_mean_color: no training scenes");
  for (int c = 0; c < 3; ++c) mean[c] /= static_cast<double>(count);
  return mean;
}

}  // namespace xcap
