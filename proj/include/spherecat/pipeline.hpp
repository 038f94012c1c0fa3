#pragma once

#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "spherecat/augment.hpp"
#include "spherecat/classifier.hpp"
#include "spherecat/config.hpp"
#include "spherecat/corpus.hpp"
#include "spherecat/errors.hpp"
#include "spherecat/evaluate.hpp"
#include "spherecat/log.hpp"
#include "spherecat/synthgen.hpp"
#include "spherecat/taxonomy.hpp"
#include "spherecat/trainer.hpp"

namespace spherecat {

// Every stage reads and writes fixed file names inside the output directory,
// so stages can be run one at a time or chained by `pipeline`.
namespace artifacts {

inline std::string taxonomy(const PipelineConfig& c) { return c.out_dir + "/taxonomy.txt"; }
inline std::string corpus(const PipelineConfig& c) { return c.out_dir + "/corpus.jsonl"; }
inline std::string embeddings(const PipelineConfig& c) { return c.out_dir + "/embeddings.txt"; }
inline std::string augmented(const PipelineConfig& c) { return c.out_dir + "/augmented.jsonl"; }
inline std::string model_dir(const PipelineConfig& c) { return c.out_dir + "/model"; }
inline std::string predictions(const PipelineConfig& c) { return c.out_dir + "/predictions.jsonl"; }
inline std::string report_json_path(const PipelineConfig& c) { return c.out_dir + "/report.json"; }
inline std::string report_text_path(const PipelineConfig& c) { return c.out_dir + "/report.txt"; }

}  // namespace artifacts

// Explicit input paths win; otherwise stages pick up what gen-synthetic or a
// previous run left in the output directory.
inline std::string input_taxonomy(const PipelineConfig& c) {
  return c.taxonomy_path.empty() ? artifacts::taxonomy(c) : c.taxonomy_path;
}

inline std::string input_corpus(const PipelineConfig& c) {
  return c.corpus_path.empty() ? artifacts::corpus(c) : c.corpus_path;
}

namespace detail {

class StageTimer {
 public:
  StageTimer(const char* stage, const PipelineConfig& cfg) : stage_(stage) {
    logging::info(std::string(stage) + ": start (seed=" + std::to_string(cfg.seed) +
                  ", config=" + hex64(cfg.hash()) + ")");
    start_ = std::chrono::steady_clock::now();
  }
  ~StageTimer() {
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - start_)
                  .count();
    if (std::uncaught_exceptions() > 0)
      logging::info(std::string(stage_) + ": aborted after " + std::to_string(ms) + " ms");
    else
      logging::info(std::string(stage_) + ": done in " + std::to_string(ms) + " ms");
  }

 private:
  const char* stage_;
  std::chrono::steady_clock::time_point start_;
};

inline void ensure_out_dir(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
}

}  // namespace detail

inline void run_gen_synthetic(const PipelineConfig& cfg) {
  detail::StageTimer t("gen-synthetic", cfg);
  detail::ensure_out_dir(cfg);
  generate_planted_files(cfg.planted_spec(), artifacts::taxonomy(cfg), artifacts::corpus(cfg));
  logging::info("gen-synthetic: wrote " + artifacts::taxonomy(cfg) + " and " +
                artifacts::corpus(cfg));
}

inline void run_train_embeddings(const PipelineConfig& cfg) {
  detail::StageTimer t("train-embeddings", cfg);
  detail::ensure_out_dir(cfg);
  auto h = load_taxonomy(input_taxonomy(cfg));
  auto corpus = load_corpus(input_corpus(cfg), h, cfg.min_count);
  logging::info("train-embeddings: " + std::to_string(corpus.docs.size()) + " documents, " +
                std::to_string(corpus.vocab.words.size()) + " words, " +
                std::to_string(h.size()) + " categories");
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.threads = cfg.deterministic ? 1 : cfg.threads;
  auto table = train_embeddings(corpus, h, tc);
  table.save(artifacts::embeddings(cfg));
  logging::info("train-embeddings: wrote " + artifacts::embeddings(cfg));
}

inline void run_augment(const PipelineConfig& cfg) {
  detail::StageTimer t("augment", cfg);
  detail::ensure_out_dir(cfg);
  auto h = load_taxonomy(input_taxonomy(cfg));
  auto corpus = load_corpus(input_corpus(cfg), h, cfg.min_count);
  auto table = EmbeddingTable::load(artifacts::embeddings(cfg));
  AugmentConfig ac = cfg.aug;
  ac.seed = cfg.seed;
  auto set = augment_hierarchy(h, table, corpus, ac);
  save_augmented(set, h, table, artifacts::augmented(cfg));
  std::size_t total = 0;
  for (const auto& pool : set.synthetic) total += pool.size();
  logging::info("augment: wrote " + std::to_string(total) + " synthetic documents to " +
                artifacts::augmented(cfg));
}

inline void run_train_classifier(const PipelineConfig& cfg) {
  detail::StageTimer t("train-classifier", cfg);
  detail::ensure_out_dir(cfg);
  auto h = load_taxonomy(input_taxonomy(cfg));
  auto corpus = load_corpus(input_corpus(cfg), h, cfg.min_count);
  auto table = EmbeddingTable::load(artifacts::embeddings(cfg));
  auto synthetic = load_augmented(artifacts::augmented(cfg), h, corpus.vocab);
  // Per-node training is independent work, so threading here cannot change
  // the result and needs no deterministic guard.
  auto hc = train_hier_classifier(h, corpus, synthetic, table, cfg.cnn, cfg.seed, cfg.threads);
  save_bundle(hc, h, artifacts::embeddings(cfg), artifacts::model_dir(cfg));
  logging::info("train-classifier: wrote " + artifacts::model_dir(cfg));
}

inline void run_predict(const PipelineConfig& cfg) {
  detail::StageTimer t("predict", cfg);
  detail::ensure_out_dir(cfg);
  auto h = load_taxonomy(input_taxonomy(cfg));
  auto corpus = load_corpus(input_corpus(cfg), h, cfg.min_count);
  auto bundle = load_bundle(artifacts::model_dir(cfg), h);

  std::ofstream out(artifacts::predictions(cfg), std::ios::binary);
  if (!out) throw DataError("cannot write " + artifacts::predictions(cfg));
  std::size_t n = 0;
  for (const auto& doc : corpus.docs) {
    if (doc.train) continue;
    // Remap through the bundle vocabulary: the model was trained against its
    // own word rows, which may differ from this corpus load.
    std::vector<int> tokens;
    tokens.reserve(doc.tokens.size());
    for (int tid : doc.tokens) {
      auto it = bundle.word_index.find(corpus.vocab.words[static_cast<std::size_t>(tid)]);
      if (it != bundle.word_index.end()) tokens.push_back(it->second);
    }
    auto path = predict_path(bundle.hc, h, tokens);
    nlohmann::ordered_json j;
    j["id"] = doc.id;
    auto arr = nlohmann::ordered_json::array();
    for (int v : path) arr.push_back(h.ids[static_cast<std::size_t>(v)]);
    j["path"] = std::move(arr);
    out << j.dump() << "\n";
    ++n;
  }
  logging::info("predict: wrote " + std::to_string(n) + " predictions to " +
                artifacts::predictions(cfg));
}

inline Predictions load_predictions(const std::string& path, const LabelHierarchy& h) {
  std::ifstream f(path);
  if (!f) throw MissingInputError("predictions not found: " + path);
  Predictions preds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(t);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("path") ||
        !j["path"].is_array())
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected {\"id\": ..., \"path\": [...]}");
    std::vector<int> path_nodes;
    for (const auto& item : j["path"]) {
      if (!item.is_string())
        throw DataError(path + ":" + std::to_string(lineno) + ": path entries must be strings");
      path_nodes.push_back(h.require(item.get<std::string>()));
    }
    auto [it, fresh] = preds.emplace(j["id"].get<std::string>(), std::move(path_nodes));
    if (!fresh)
      throw DataError(path + ":" + std::to_string(lineno) + ": duplicate prediction for " +
                      it->first);
  }
  return preds;
}

inline EvalReport run_evaluate(const PipelineConfig& cfg) {
  detail::StageTimer t("evaluate", cfg);
  detail::ensure_out_dir(cfg);
  auto h = load_taxonomy(input_taxonomy(cfg));
  auto corpus = load_corpus(input_corpus(cfg), h, cfg.min_count);
  auto preds = load_predictions(artifacts::predictions(cfg), h);

  GoldLabels gold;
  for (const auto& doc : corpus.docs)
    if (!doc.train && doc.gold_label >= 0) gold[doc.id] = doc.gold_label;
  if (gold.empty()) throw DataError("evaluate: no labeled test documents in corpus");

  auto report = evaluate_predictions(preds, gold, h);
  {
    std::ofstream out(artifacts::report_json_path(cfg), std::ios::binary);
    if (!out) throw DataError("cannot write " + artifacts::report_json_path(cfg));
    out << report_json(report);
  }
  {
    std::ofstream out(artifacts::report_text_path(cfg), std::ios::binary);
    if (!out) throw DataError("cannot write " + artifacts::report_text_path(cfg));
    out << report_table(report);
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "evaluate: leaf micro=%.4f macro=%.4f, overall micro=%.4f macro=%.4f",
                report.leaf_micro, report.leaf_macro, report.overall_micro, report.overall_macro);
  logging::info(buf);
  return report;
}

// The five model stages in order; data generation stays a separate command.
inline EvalReport run_pipeline(const PipelineConfig& cfg) {
  run_train_embeddings(cfg);
  run_augment(cfg);
  run_train_classifier(cfg);
  run_predict(cfg);
  return run_evaluate(cfg);
}

}  // namespace spherecat
