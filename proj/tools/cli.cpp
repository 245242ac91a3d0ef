#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <iostream>

#include "xcap/ablation.hpp"
#include "xcap/checkpoint.hpp"
#include "xcap/dataset.hpp"
#include "xcap/explain.hpp"
#include "xcap/report.hpp"
#include "xcap/reweight.hpp"

namespace xcap {

namespace fs = std::filesystem;

namespace {

struct LoadedData {
  SyntheticDataset data;
  std::string hash;
};

LoadedData load_data(const std::string& dir) {
  LoadedData ld;
  ld.data = load_dataset(dir);
  ld.hash = ld.data.manifest.hash;
  return ld;
}

std::string run_hash(const LoadedData& ld, const CaptionerParams& params,
                     uint64_t seed, const std::string& command) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("manifest", ld.hash);
  kv.emplace_back("seed", std::to_string(seed));
  kv.emplace_back("command", command);
  for (const auto& [k, v] : params.cfg.to_key_values()) kv.emplace_back("cfg." + k, v);
  return config_hash(kv);
}

std::vector<std::string> object_words_for(const LoadedData& ld,
                                          const std::string& words_file) {
  if (!words_file.empty()) return load_word_list(words_file);
  return object_word_list(ld.data, static_cast<int>(shape_names().size()));
}

// Greedy captions for one split, sorted by scene id.
struct DecodedScene {
  const SyntheticScene* scene;
  std::vector<int> tokens;
  std::vector<std::string> words;
};

std::vector<DecodedScene> decode_split(const SyntheticDataset& data,
                                       const CaptionerParams& params,
                                       const Vocabulary& vocab, const std::string& split,
                                       int beam) {
  std::vector<DecodedScene> out;
  for (const SyntheticScene& s : data.scenes) {
    if (s.split != split) continue;
    DecodedScene d;
    d.scene = &s;
    DecodeResult r = beam >= 2
                         ? beam_decode(params, s.image, false, vocab.start_id(),
                                       vocab.end_id(), beam)
                         : greedy_decode(params, s.image, false, vocab.start_id(),
                                         vocab.end_id());
    d.tokens = r.tokens;
    d.words = vocab.decode(r.tokens);
    out.push_back(std::move(d));
  }
  return out;
}

int cmd_gen_data(const std::string& out_dir, int n, double bias_rate, uint64_t seed,
                 int vocab_min_count) {
  SyntheticDataset data = generate_dataset(n, bias_rate, seed);
  data.manifest.vocab_min_count = vocab_min_count;
  data.manifest.hash = hash_hex(fnv1a(data.manifest.canonical()));
  save_dataset(out_dir, data);
  std::cout << "dataset " << out_dir << " n=" << n << " bias_rate=" << bias_rate
            << " hash=" << data.manifest.hash << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_dir,
              const std::string& model, int epochs, int batch, double lr, uint64_t seed,
              int d_h, int d_w, int d_a, int n_h, int enc_c1, int scst_steps,
              int anneal_patience, int stop_patience, bool quiet) {
  LoadedData ld = load_data(data_dir);
  Vocabulary vocab = build_vocab(ld.data, ld.data.manifest.vocab_min_count);

  CaptionerConfig cfg;
  cfg.attention = attention_kind_from_name(model);
  cfg.vocab_size = vocab.size();
  cfg.d_h = d_h;
  cfg.d_w = d_w;
  cfg.d_a = d_a;
  cfg.n_h = n_h;
  cfg.enc_c1 = enc_c1;
  cfg.n_v = 16;
  cfg.image_size = ld.data.manifest.image_size;
  cfg.uses_encoder = true;
  cfg.validate();

  Rng rng(seed);
  CaptionerParams params = CaptionerParams::init(cfg, rng);
  auto train = to_train_samples(ld.data, vocab, "train");
  auto val = to_train_samples(ld.data, vocab, "val");

  TrainOptions opt;
  opt.epochs = epochs;
  opt.batch_size = batch;
  opt.lr = lr;
  opt.seed = seed;
  opt.anneal_patience = anneal_patience;
  opt.stop_patience = stop_patience;
  opt.verbose = !quiet;
  TrainResult res = train_xent(params, train, val, vocab, opt);

  if (scst_steps > 0) {
    std::vector<std::vector<std::vector<std::string>>> corpus;
    for (const auto& s : train) corpus.push_back(s.ref_words);
    CiderScorer scorer(corpus);
    ScstOptions sopt;
    sopt.steps = scst_steps;
    sopt.batch_size = batch;
    sopt.seed = seed + 1;
    sopt.verbose = !quiet;
    train_scst(params, train, cider_reward(scorer, vocab), vocab, sopt);
  }

  std::map<std::string, std::string> extra;
  extra["seed"] = std::to_string(seed);
  extra["vocab_min_count"] = std::to_string(ld.data.manifest.vocab_min_count);
  extra["dataset_hash"] = ld.hash;
  save_checkpoint(out_dir, params, vocab, extra);

  TsvReport curve((fs::path(out_dir) / "loss_curve.tsv").string(),
                  run_hash(ld, params, seed, "train"),
                  {"epoch", "mean_loss", "val_score", "lr"});
  for (const EpochStats& st : res.history) {
    curve.row({std::to_string(st.epoch), format_double(st.mean_loss),
               format_double(st.val_score), format_double(st.lr, 8)});
  }
  curve.close();
  if (!quiet) std::cout << "checkpoint saved to " << out_dir << "\n";
  return 0;
}

int cmd_caption(const std::string& ckpt_dir, const std::string& data_dir, int id,
                int beam) {
  Checkpoint ck = load_checkpoint(ckpt_dir);
  LoadedData ld = load_data(data_dir);
  auto emit = [&](const SyntheticScene& s) {
    DecodeResult r = beam >= 2 ? beam_decode(ck.params, s.image, false,
                                             ck.vocab.start_id(), ck.vocab.end_id(), beam)
                               : greedy_decode(ck.params, s.image, false,
                                               ck.vocab.start_id(), ck.vocab.end_id());
    std::cout << s.id << "\t" << join_words(ck.vocab.decode(r.tokens)) << "\n";
  };
  if (id >= 0) {
    emit(scene_by_id(ld.data, id));
  } else {
    for (const SyntheticScene& s : ld.data.scenes) {
      if (s.split == "test") emit(s);
    }
  }
  return 0;
}

int cmd_explain(const std::string& ckpt_dir, const std::string& data_dir, int id,
                int word_index, const std::string& method_name, const std::string& out,
                bool per_head, double eps, double alpha) {
  Checkpoint ck = load_checkpoint(ckpt_dir);
  LoadedData ld = load_data(data_dir);
  const SyntheticScene& scene = scene_by_id(ld.data, id);
  ExplainMethod method = explain_method_from_name(method_name);
  lrp::LrpConfig lcfg;
  lcfg.epsilon = eps;
  lcfg.alpha = alpha;

  DecodeResult r = greedy_decode(ck.params, scene.image, false, ck.vocab.start_id(),
                                 ck.vocab.end_id());
  if (r.tokens.empty()) throw std::runtime_error("empty caption, nothing to explain");
  int T = word_index > 0 ? word_index : static_cast<int>(r.tokens.size());
  Explanation e = explain(method, ck.params, scene.image, false, r.tokens, T, lcfg,
                          ck.vocab.start_id());

  write_pgm(out + ".pgm", e.image_relevance);
  write_csv_matrix(out + ".csv", e.image_relevance);
  {
    std::ofstream ws(out + "_words.csv");
    ws << "token,score\n";
    for (size_t k = 0; k < e.word_scores.size(); ++k) {
      ws << ck.vocab.token(r.tokens[k]) << "," << format_double(e.word_scores[k], 9)
         << "\n";
    }
  }
  if (per_head && ck.params.cfg.attention == AttentionKind::kMultiHead) {
    auto heads = per_head_explanations(method, ck.params, scene.image, false, r.tokens, T,
                                       lcfg, ck.vocab.start_id());
    for (size_t h = 0; h < heads.size(); ++h) {
      write_pgm(out + "_head" + std::to_string(h) + ".pgm", heads[h].image_relevance);
      write_csv_matrix(out + "_head" + std::to_string(h) + ".csv",
                       heads[h].image_relevance);
    }
  }
  std::cout << "caption:";
  for (const auto& w : ck.vocab.decode(r.tokens)) std::cout << " " << w;
  std::cout << "\nexplained word " << T << " ("
            << ck.vocab.token(r.tokens[static_cast<size_t>(T - 1)]) << ")";
  if (e.has_beta) std::cout << " beta=" << format_double(e.beta);
  std::cout << "\n";
  return 0;
}

int cmd_ablate(const std::string& ckpt_dir, const std::string& data_dir,
               const std::string& mode, const std::string& method_name, int k, int patch,
               int min_index, uint64_t seed, const std::string& out) {
  Checkpoint ck = load_checkpoint(ckpt_dir);
  LoadedData ld = load_data(data_dir);
  ExplainMethod method = explain_method_from_name(method_name);
  lrp::LrpConfig lcfg;
  auto object_words = object_words_for(ld, "");
  Tensor fill = training_mean_color(ld.data);
  Rng rng(seed);

  auto decoded = decode_split(ld.data, ck.params, ck.vocab, "test", 1);
  TsvReport report(out, run_hash(ld, ck.params, seed, "ablate-" + mode),
                   {"id", "word", "t", "p_orig", "drop", "vanished", "rand_drop",
                    "rand_vanished"});
  long drops = 0, rand_drops = 0, vanish = 0, rand_vanish = 0, count = 0;
  for (const auto& d : decoded) {
    for (size_t pos = 0; pos < d.words.size(); ++pos) {
      int T = static_cast<int>(pos) + 1;
      if (std::find(object_words.begin(), object_words.end(), d.words[pos]) ==
          object_words.end()) {
        continue;
      }
      if (T <= min_index) continue;
      Rng srng = rng.fork(static_cast<uint64_t>(d.scene->id) * 31 + pos);
      double p_orig = target_word_probability(ck.params, d.scene->image, false, d.tokens,
                                              T, ck.vocab.start_id());
      double drop = 0.0, rand_drop = 0.0;
      bool vanished = false, rand_vanished = false;
      if (mode == "image") {
        Explanation e = explain(method, ck.params, d.scene->image, false, d.tokens, T,
                                lcfg, ck.vocab.start_id());
        auto res = image_ablation(ck.params, d.scene->image, d.tokens, T,
                                  e.image_relevance, k, patch, fill,
                                  ck.vocab.start_id(), ck.vocab.end_id());
        auto rnd = image_ablation_random(ck.params, d.scene->image, d.tokens, T, k, patch,
                                         fill, ck.vocab.start_id(), ck.vocab.end_id(),
                                         srng);
        drop = res.prob_drop;
        vanished = res.word_vanished;
        rand_drop = rnd.prob_drop;
        rand_vanished = rnd.word_vanished;
      } else if (mode == "word") {
        if (T - 1 < k) continue;
        Explanation e = explain(method, ck.params, d.scene->image, false, d.tokens, T,
                                lcfg, ck.vocab.start_id());
        auto res = word_ablation(ck.params, d.scene->image, false, d.tokens, T,
                                 e.word_scores, k, ck.vocab.start_id());
        auto rnd = word_ablation_random(ck.params, d.scene->image, false, d.tokens, T, k,
                                        ck.vocab.start_id(), srng);
        drop = res.prob_drop;
        rand_drop = rnd.prob_drop;
      } else {
        throw CLI::ValidationError("--mode must be image or word");
      }
      report.row({std::to_string(d.scene->id), d.words[pos], std::to_string(T),
                  format_double(p_orig), format_double(drop),
                  vanished ? "1" : "0", format_double(rand_drop),
                  rand_vanished ? "1" : "0"});
      drops += drop > 0.0 ? 1 : 0;
      rand_drops += rand_drop > 0.0 ? 1 : 0;
      vanish += vanished ? 1 : 0;
      rand_vanish += rand_vanished ? 1 : 0;
      ++count;
    }
  }
  report.summary("instances", std::to_string(count));
  report.summary("drop_fraction", format_double(count ? double(drops) / count : 0.0));
  report.summary("random_drop_fraction",
                 format_double(count ? double(rand_drops) / count : 0.0));
  if (mode == "image") {
    report.summary("vanished_fraction",
                   format_double(count ? double(vanish) / count : 0.0));
    report.summary("random_vanished_fraction",
                   format_double(count ? double(rand_vanish) / count : 0.0));
  }
  report.close();
  std::cout << "ablation report written to " << out << " (" << count << " instances)\n";
  return 0;
}

int cmd_localize(const std::string& ckpt_dir, const std::string& data_dir,
                 const std::string& method_name, const std::string& boxes_file,
                 const std::string& sign_name, uint64_t seed, const std::string& out) {
  Checkpoint ck = load_checkpoint(ckpt_dir);
  LoadedData ld = load_data(data_dir);
  ExplainMethod method = explain_method_from_name(method_name);
  RelevanceSign sign =
      sign_name == "neg" ? RelevanceSign::kNegative : RelevanceSign::kPositive;
  lrp::LrpConfig lcfg;
  auto object_words = object_words_for(ld, "");

  std::map<int, std::vector<std::pair<std::string, BBox>>> annotations;
  if (!boxes_file.empty()) annotations = load_bbox_annotations(boxes_file);

  auto decoded = decode_split(ld.data, ck.params, ck.vocab, "test", 1);
  TsvReport report(out, run_hash(ld, ck.params, seed, "localize"),
                   {"id", "word", "t", "correctness"});
  double sum = 0.0;
  long count = 0;
  for (const auto& d : decoded) {
    for (size_t pos = 0; pos < d.words.size(); ++pos) {
      const std::string& word = d.words[pos];
      if (std::find(object_words.begin(), object_words.end(), word) ==
          object_words.end()) {
        continue;
      }
      // Correctly predicted words only: the scene must contain the object.
      std::vector<BBox> boxes;
      if (!boxes_file.empty()) {
        auto it = annotations.find(d.scene->id);
        if (it != annotations.end()) {
          for (const auto& [w, b] : it->second) {
            if (w == word) boxes.push_back(b);
          }
        }
      } else {
        for (const auto& o : d.scene->objects) {
          if (o.shape == word) boxes.push_back(o.box);
        }
      }
      if (boxes.empty()) continue;
      int T = static_cast<int>(pos) + 1;
      double value = 0.0;
      if (ck.params.cfg.attention == AttentionKind::kMultiHead &&
          method != ExplainMethod::kGuidedGradCam) {
        auto heads = per_head_explanations(method, ck.params, d.scene->image, false,
                                           d.tokens, T, lcfg, ck.vocab.start_id());
        std::vector<Tensor> maps;
        for (const auto& h : heads) maps.push_back(h.image_relevance);
        value = correctness_multihead(maps, boxes, sign);
      } else {
        Explanation e = explain(method, ck.params, d.scene->image, false, d.tokens, T,
                                lcfg, ck.vocab.start_id());
        value = correctness(e.image_relevance, boxes, sign).value;
      }
      report.row({std::to_string(d.scene->id), word, std::to_string(T),
                  format_double(value)});
      sum += value;
      ++count;
    }
  }
  report.summary("instances", std::to_string(count));
  report.summary("mean_correctness", format_double(count ? sum / count : 0.0));
  report.close();
  std::cout << "localization report written to " << out << " (" << count
            << " instances)\n";
  return 0;
}

int cmd_auc(const std::string& ckpt_dir, const std::string& data_dir,
            const std::string& methods_csv, uint64_t seed, const std::string& out) {
  Checkpoint ck = load_checkpoint(ckpt_dir);
  LoadedData ld = load_data(data_dir);
  lrp::LrpConfig lcfg;
  auto object_words = object_words_for(ld, "");

  std::vector<std::string> methods;
  {
    std::string cur;
    for (char c : methods_csv) {
      if (c == ',') {
        if (!cur.empty()) methods.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) methods.push_back(cur);
  }

  auto decoded = decode_split(ld.data, ck.params, ck.vocab, "test", 1);
  std::vector<std::string> cols = {"id", "word", "t", "label"};
  for (const auto& m : methods) {
    for (const char* stat : {"max", "mean", "q5", "q50"}) {
      cols.push_back(m + "_" + stat);
    }
  }
  cols.push_back("one_minus_beta");
  cols.push_back("random_stat");
  TsvReport report(out, run_hash(ld, ck.params, seed, "auc"), cols);

  struct StatTrack {
    std::vector<int> labels;
    std::map<std::string, std::vector<double>> stats;
  } track;
  Rng rng(seed);

  for (const auto& d : decoded) {
    for (size_t pos = 0; pos < d.words.size(); ++pos) {
      const std::string& word = d.words[pos];
      if (std::find(object_words.begin(), object_words.end(), word) ==
          object_words.end()) {
        continue;
      }
      int T = static_cast<int>(pos) + 1;
      int label = d.scene->has_object_word(word) ? 1 : 0;
      std::vector<std::string> cells = {std::to_string(d.scene->id), word,
                                        std::to_string(T), std::to_string(label)};
      double beta = 0.0;
      bool has_beta = false;
      for (const auto& m : methods) {
        Explanation e = explain(explain_method_from_name(m), ck.params, d.scene->image,
                                false, d.tokens, T, lcfg, ck.vocab.start_id());
        HeatmapStats hs = heatmap_statistics(e.image_relevance);
        track.stats[m + "_max"].push_back(hs.max);
        track.stats[m + "_mean"].push_back(hs.mean);
        track.stats[m + "_q5"].push_back(hs.quantile5);
        track.stats[m + "_q50"].push_back(hs.quantile50);
        cells.push_back(format_double(hs.max, 9));
        cells.push_back(format_double(hs.mean, 9));
        cells.push_back(format_double(hs.quantile5, 9));
        cells.push_back(format_double(hs.quantile50, 9));
        if (e.has_beta) {
          beta = e.beta;
          has_beta = true;
        }
      }
      double omb = has_beta ? 1.0 - beta : 0.0;
      double rnd = rng.fork(static_cast<uint64_t>(d.scene->id) * 131 + pos).uniform();
      track.labels.push_back(label);
      track.stats["one_minus_beta"].push_back(omb);
      track.stats["random_stat"].push_back(rnd);
      cells.push_back(format_double(omb, 9));
      cells.push_back(format_double(rnd, 9));
      report.row(cells);
    }
  }

  int n_pos = 0;
  for (int l : track.labels) n_pos += l;
  report.summary("instances", std::to_string(track.labels.size()));
  report.summary("true_positive", std::to_string(n_pos));
  report.summary("false_positive",
                 std::to_string(static_cast<int>(track.labels.size()) - n_pos));
  for (const auto& [name, stats] : track.stats) {
    report.summary("auc_" + name, format_double(auc_statistic(track.labels, stats)));
  }
  report.close();
  std::cout << "auc report written to " << out << " (" << track.labels.size()
            << " instances)\n";
  return 0;
}

int cmd_eval_map(const std::string& ckpt_dir, const std::string& data_dir,
                 const std::string& words_file, int beam, uint64_t seed,
                 const std::string& out) {
  Checkpoint ck = load_checkpoint(ckpt_dir);
  LoadedData ld = load_data(data_dir);
  auto words = object_words_for(ld, words_file);
  auto decoded = decode_split(ld.data, ck.params, ck.vocab, "test", beam);

  std::vector<std::vector<std::string>> predictions;
  std::vector<std::vector<std::vector<std::string>>> references;
  for (const auto& d : decoded) {
    predictions.push_back(d.words);
    references.push_back(d.scene->captions);
  }
  MapResult mr = map_frequent_words(predictions, references, words);
  CiderScorer scorer(references);
  double cider = scorer.corpus_score(predictions, references);

  TsvReport report(out, run_hash(ld, ck.params, seed, "eval-map"),
                   {"word", "predicted", "correct", "precision"});
  for (const auto& wp : mr.per_word) {
    report.row({wp.word, std::to_string(wp.predicted), std::to_string(wp.correct),
                format_double(wp.predicted ? double(wp.correct) / wp.predicted : 0.0)});
  }
  report.summary("map", format_double(mr.mean_precision));
  report.summary("map_percent", format_double(100.0 * mr.mean_precision, 2));
  report.summary("cider", format_double(cider));
  report.summary("samples", std::to_string(predictions.size()));
  report.close();
  std::cout << "map=" << format_double(100.0 * mr.mean_precision, 2)
            << " cider=" << format_double(cider) << " -> " << out << "\n";
  return 0;
}

int cmd_finetune_lrp(const std::string& ckpt_dir, const std::string& data_dir,
                     const std::string& mode, double lambda, int epochs, double lr,
                     uint64_t seed, bool diff_omega, const std::string& out_dir) {
  Checkpoint ck = load_checkpoint(ckpt_dir);
  LoadedData ld = load_data(data_dir);
  Vocabulary& vocab = ck.vocab;
  auto train = to_train_samples(ld.data, vocab, "train");
  auto words = object_words_for(ld, "");

  IftOptions opt;
  opt.lambda = lambda;
  opt.epochs = epochs;
  opt.lr = lr;
  opt.seed = seed;
  opt.differentiate_omega = diff_omega;

  CaptionerParams tuned = ck.params;
  CaptionerParams baseline = ck.params;
  const auto& stop = builtin_stop_words();
  if (mode == "ce") {
    finetune_lrp_ce(tuned, train, vocab, stop, opt);
    finetune_baseline_ce(baseline, train, vocab, opt);
  } else if (mode == "scst") {
    std::vector<std::vector<std::vector<std::string>>> corpus;
    for (const auto& s : train) corpus.push_back(s.ref_words);
    CiderScorer scorer(corpus);
    RewardFn reward = cider_reward(scorer, vocab);
    finetune_lrp_scst(tuned, train, reward, vocab, stop, opt);
    finetune_baseline_scst(baseline, train, reward, vocab, opt);
  } else {
    throw CLI::ValidationError("--mode must be ce or scst");
  }

  std::map<std::string, std::string> extra = ck.extra;
  extra["seed"] = std::to_string(seed);
  save_checkpoint((fs::path(out_dir) / "before").string(), ck.params, vocab, extra);
  save_checkpoint((fs::path(out_dir) / "after").string(), tuned, vocab, extra);
  save_checkpoint((fs::path(out_dir) / "baseline").string(), baseline, vocab, extra);

  // Comparison report over the test split.
  auto evaluate = [&](const CaptionerParams& p) {
    auto decoded = decode_split(ld.data, p, vocab, "test", 3);
    std::vector<std::vector<std::string>> preds;
    std::vector<std::vector<std::vector<std::string>>> refs;
    for (const auto& d : decoded) {
      preds.push_back(d.words);
      refs.push_back(d.scene->captions);
    }
    MapResult mr = map_frequent_words(preds, refs, words);
    CiderScorer scorer(refs);
    return std::make_pair(mr, scorer.corpus_score(preds, refs));
  };
  auto [map_before, cider_before] = evaluate(ck.params);
  auto [map_after, cider_after] = evaluate(tuned);
  auto [map_base, cider_base] = evaluate(baseline);

  TsvReport report((fs::path(out_dir) / "map_report.tsv").string(),
                   run_hash(ld, ck.params, seed, "finetune-lrp-" + mode),
                   {"variant", "map_percent", "cider"});
  report.row({"before", format_double(100 * map_before.mean_precision, 2),
              format_double(cider_before)});
  report.row({"baseline_finetune", format_double(100 * map_base.mean_precision, 2),
              format_double(cider_base)});
  report.row({"lrp_finetune", format_double(100 * map_after.mean_precision, 2),
              format_double(cider_after)});
  report.summary("map_delta_vs_baseline",
                 format_double(100 * (map_after.mean_precision - map_base.mean_precision), 2));
  report.summary("cider_rel_change_vs_baseline",
                 format_double(cider_base != 0.0
                                   ? (cider_after - cider_base) / std::fabs(cider_base)
                                   : 0.0));
  report.close();
  std::cout << "map before=" << format_double(100 * map_before.mean_precision, 2)
            << " baseline=" << format_double(100 * map_base.mean_precision, 2)
            << " lrp=" << format_double(100 * map_after.mean_precision, 2) << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"explainable image captioning at desk scale"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out;
  int gen_n = 400;
  double gen_bias = 0.3;
  uint64_t gen_seed = 1;
  int gen_min_count = 1;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n", gen_n, "number of scenes");
  gen->add_option("--bias-rate", gen_bias, "fraction of biased training captions");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--vocab-min-count", gen_min_count, "vocabulary threshold");

  // train
  auto* tr = app.add_subcommand("train", "train a captioner");
  std::string tr_data, tr_out, tr_model = "adaptive";
  int tr_epochs = 12, tr_batch = 8, tr_dh = 48, tr_dw = 24, tr_da = 16, tr_nh = 4;
  int tr_enc = 12;
  int tr_scst = 0, tr_anneal = 3, tr_stop = 6;
  double tr_lr = 5e-4;
  uint64_t tr_seed = 1;
  bool tr_quiet = false;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint directory")->required();
  tr->add_option("--model", tr_model, "adaptive | multihead");
  tr->add_option("--epochs", tr_epochs);
  tr->add_option("--batch", tr_batch);
  tr->add_option("--lr", tr_lr);
  tr->add_option("--seed", tr_seed);
  tr->add_option("--d-h", tr_dh);
  tr->add_option("--d-w", tr_dw);
  tr->add_option("--d-a", tr_da);
  tr->add_option("--n-h", tr_nh);
  tr->add_option("--enc-c1", tr_enc, "first conv layer channels");
  tr->add_option("--scst-steps", tr_scst, "policy-gradient steps after CE training");
  tr->add_option("--anneal-patience", tr_anneal, "epochs without val gain before annealing");
  tr->add_option("--stop-patience", tr_stop, "epochs without val gain before stopping");
  tr->add_flag("--quiet", tr_quiet);

  // caption
  auto* cap = app.add_subcommand("caption", "decode captions");
  std::string cap_ckpt, cap_data;
  int cap_id = -1, cap_beam = 3;
  cap->add_option("--ckpt", cap_ckpt)->required();
  cap->add_option("--data", cap_data)->required();
  cap->add_option("--id", cap_id, "scene id (default: whole test split)");
  cap->add_option("--beam", cap_beam, "beam size, 1 = greedy");

  // explain
  auto* ex = app.add_subcommand("explain", "emit heatmaps and word scores");
  std::string ex_ckpt, ex_data, ex_method = "lrp", ex_out = "explanation";
  int ex_id = 0, ex_T = 0;
  bool ex_per_head = false;
  double ex_eps = 0.01, ex_alpha = 0.0;
  ex->add_option("--ckpt", ex_ckpt)->required();
  ex->add_option("--data", ex_data)->required();
  ex->add_option("--id", ex_id, "scene id")->required();
  ex->add_option("--word-index", ex_T, "1-based word position (default: last word)");
  ex->add_option("--method", ex_method, "lrp|gradcam|guidedbp|guidedgradcam|attention");
  ex->add_option("--out", ex_out, "output path prefix");
  ex->add_option("--epsilon", ex_eps);
  ex->add_option("--alpha", ex_alpha);
  ex->add_flag("--per-head", ex_per_head);

  // ablate
  auto* ab = app.add_subcommand("ablate", "input ablation faithfulness protocol");
  std::string ab_ckpt, ab_data, ab_mode = "image", ab_method = "lrp", ab_out;
  int ab_k = 4, ab_patch = 4, ab_min_index = 0;
  uint64_t ab_seed = 1;
  ab->add_option("--ckpt", ab_ckpt)->required();
  ab->add_option("--data", ab_data)->required();
  ab->add_option("--mode", ab_mode, "image | word");
  ab->add_option("--method", ab_method);
  ab->add_option("--k", ab_k, "patches or words to remove");
  ab->add_option("--patch", ab_patch, "patch side in pixels");
  ab->add_option("--min-index", ab_min_index, "only words with position > this");
  ab->add_option("--seed", ab_seed);
  ab->add_option("--out", ab_out, "report path")->required();

  // localize
  auto* loc = app.add_subcommand("localize", "box correctness of explanations");
  std::string loc_ckpt, loc_data, loc_method = "lrp", loc_boxes, loc_sign = "pos", loc_out;
  uint64_t loc_seed = 1;
  loc->add_option("--ckpt", loc_ckpt)->required();
  loc->add_option("--data", loc_data)->required();
  loc->add_option("--method", loc_method);
  loc->add_option("--boxes", loc_boxes, "bbox annotation file (default: dataset boxes)");
  loc->add_option("--sign", loc_sign, "pos | neg");
  loc->add_option("--seed", loc_seed);
  loc->add_option("--out", loc_out)->required();

  // auc
  auto* au = app.add_subcommand("auc", "hallucination separability statistics");
  std::string au_ckpt, au_data, au_methods = "lrp", au_out;
  uint64_t au_seed = 1;
  au->add_option("--ckpt", au_ckpt)->required();
  au->add_option("--data", au_data)->required();
  au->add_option("--methods", au_methods, "comma-separated explanation methods");
  au->add_option("--seed", au_seed);
  au->add_option("--out", au_out)->required();

  // eval-map
  auto* em = app.add_subcommand("eval-map", "precision of frequent object words");
  std::string em_ckpt, em_data, em_words, em_out;
  int em_beam = 3;
  uint64_t em_seed = 1;
  em->add_option("--ckpt", em_ckpt)->required();
  em->add_option("--data", em_data)->required();
  em->add_option("--words", em_words, "object-word list file");
  em->add_option("--beam", em_beam);
  em->add_option("--seed", em_seed);
  em->add_option("--out", em_out)->required();

  // finetune-lrp
  auto* ft = app.add_subcommand("finetune-lrp", "relevance-guided fine-tuning");
  std::string ft_ckpt, ft_data, ft_mode = "ce", ft_out;
  double ft_lambda = 0.5, ft_lr = 1e-4;
  int ft_epochs = 1;
  uint64_t ft_seed = 1;
  bool ft_diff = false;
  ft->add_option("--ckpt", ft_ckpt)->required();
  ft->add_option("--data", ft_data)->required();
  ft->add_option("--mode", ft_mode, "ce | scst");
  ft->add_option("--lambda", ft_lambda);
  ft->add_option("--epochs", ft_epochs);
  ft->add_option("--lr", ft_lr);
  ft->add_option("--seed", ft_seed);
  ft->add_flag("--differentiate-omega", ft_diff, "ablation: gradients through the weights");
  ft->add_option("--out", ft_out, "output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_out, gen_n, gen_bias, gen_seed, gen_min_count);
    if (tr->parsed()) {
      return cmd_train(tr_data, tr_out, tr_model, tr_epochs, tr_batch, tr_lr, tr_seed,
                       tr_dh, tr_dw, tr_da, tr_nh, tr_enc, tr_scst, tr_anneal, tr_stop,
                       tr_quiet);
    }
    if (cap->parsed()) return cmd_caption(cap_ckpt, cap_data, cap_id, cap_beam);
    if (ex->parsed()) {
      return cmd_explain(ex_ckpt, ex_data, ex_id, ex_T, ex_method, ex_out, ex_per_head,
                         ex_eps, ex_alpha);
    }
    if (ab->parsed()) {
      return cmd_ablate(ab_ckpt, ab_data, ab_mode, ab_method, ab_k, ab_patch,
                        ab_min_index, ab_seed, ab_out);
    }
    if (loc->parsed()) {
      return cmd_localize(loc_ckpt, loc_data, loc_method, loc_boxes, loc_sign, loc_seed,
                          loc_out);
    }
    if (au->parsed()) return cmd_auc(au_ckpt, au_data, au_methods, au_seed, au_out);
    if (em->parsed()) {
      return cmd_eval_map(em_ckpt, em_data, em_words, em_beam, em_seed, em_out);
    }
    if (ft->parsed()) {
      return cmd_finetune_lrp(ft_ckpt, ft_data, ft_mode, ft_lambda, ft_epochs, ft_lr,
                              ft_seed, ft_diff, ft_out);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace xcap
