#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "spherecat/augment.hpp"
#include "spherecat/cnn.hpp"
#include "spherecat/errors.hpp"
#include "spherecat/synthgen.hpp"
#include "spherecat/trainer.hpp"
#include "spherecat/util.hpp"

namespace spherecat {

// Declarative run configuration: a flat key=value file ('#' comments), with
// CLI flags layered on top. Unknown keys are rejected.
struct PipelineConfig {
  std::string corpus_path;
  std::string taxonomy_path;
  std::string out_dir = "out";
  int min_count = 1;
  std::uint64_t seed = 42;
  bool deterministic = true;
  int threads = 1;
  TrainConfig train;
  AugmentConfig aug;
  CnnConfig cnn;
  PlantedSpec gen;
  // applied to every generated metadata type
  std::vector<std::string> gen_meta_types{"user", "tag"};
  double gen_affinity = 0.9;
  int gen_meta_pool = 3;
  int gen_meta_per_doc = 1;
  double gen_meta_missing = 0.1;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string canonical() const;
  std::uint64_t hash() const { return fnv1a64(canonical()); }
  PlantedSpec planted_spec() const;

  static PipelineConfig from_file(const std::string& path);
};

namespace detail {

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw ConfigError("config: " + key + ": not an integer: " + v);
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw ConfigError("config: " + key + ": not a number: " + v);
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config: " + key + ": not a boolean: " + v);
}

inline std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  for (const auto& item : split(v, ',')) {
    std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& item : parse_list(v))
    out.push_back(static_cast<int>(parse_int(key, item)));
  return out;
}

}  // namespace detail

inline void PipelineConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_int_list;
  using detail::parse_list;
  using detail::parse_real;
  if (key == "corpus") corpus_path = value;
  else if (key == "taxonomy") taxonomy_path = value;
  else if (key == "out") out_dir = value;
  else if (key == "min_count") min_count = static_cast<int>(parse_int(key, value));
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "deterministic") deterministic = parse_bool(key, value);
  else if (key == "threads") threads = static_cast<int>(parse_int(key, value));
  else if (key == "dim") train.dim = static_cast<int>(parse_int(key, value));
  else if (key == "gamma_l") train.gamma_label = parse_real(key, value);
  else if (key == "gamma_m") train.gamma_meta = parse_real(key, value);
  else if (key == "gamma_c") train.gamma_corpus = parse_real(key, value);
  else if (key == "negatives") train.negatives = static_cast<int>(parse_int(key, value));
  else if (key == "lr") train.lr = parse_real(key, value);
  else if (key == "epochs") train.epochs = static_cast<int>(parse_int(key, value));
  else if (key == "use_hierarchy") train.use_hierarchy = parse_bool(key, value);
  else if (key == "use_metadata") train.use_metadata = parse_bool(key, value);
  else if (key == "exclude_meta_types") train.exclude_meta_types = parse_list(value);
  else if (key == "beta") aug.beta = static_cast<int>(parse_int(key, value));
  else if (key == "kappa") aug.kappa = parse_real(key, value);
  else if (key == "top_n") aug.top_n = static_cast<int>(parse_int(key, value));
  else if (key == "synth_len") aug.length = static_cast<int>(parse_int(key, value));
  else if (key == "clf_maps") cnn.maps = static_cast<int>(parse_int(key, value));
  else if (key == "clf_widths") cnn.widths = parse_int_list(key, value);
  else if (key == "clf_batch") cnn.batch = static_cast<int>(parse_int(key, value));
  else if (key == "clf_lr") cnn.lr = parse_real(key, value);
  else if (key == "clf_epochs") cnn.max_epochs = static_cast<int>(parse_int(key, value));
  else if (key == "clf_early_acc") cnn.early_stop_acc = parse_real(key, value);
  else if (key == "gen_branching") gen.branching = parse_int_list(key, value);
  else if (key == "gen_docs_per_leaf") gen.docs_per_leaf = static_cast<int>(parse_int(key, value));
  else if (key == "gen_shots") gen.train_shots = static_cast<int>(parse_int(key, value));
  else if (key == "gen_doc_len") gen.doc_len = static_cast<int>(parse_int(key, value));
  else if (key == "gen_leaf_words") gen.leaf_words = static_cast<int>(parse_int(key, value));
  else if (key == "gen_parent_words") gen.parent_words = static_cast<int>(parse_int(key, value));
  else if (key == "gen_shared_words") gen.shared_words = static_cast<int>(parse_int(key, value));
  else if (key == "gen_mix_leaf") gen.mix_leaf = parse_real(key, value);
  else if (key == "gen_mix_parent") gen.mix_parent = parse_real(key, value);
  else if (key == "gen_meta_types") gen_meta_types = parse_list(value);
  else if (key == "gen_affinity") gen_affinity = parse_real(key, value);
  else if (key == "gen_meta_pool") gen_meta_pool = static_cast<int>(parse_int(key, value));
  else if (key == "gen_meta_per_doc") gen_meta_per_doc = static_cast<int>(parse_int(key, value));
  else if (key == "gen_meta_missing") gen_meta_missing = parse_real(key, value);
  else throw ConfigError("config: unknown key: " + key);
}

inline PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingInputError("config file not found: " + path);
  PipelineConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

inline void PipelineConfig::validate() const {
  if (min_count < 1) throw ConfigError("config: min_count must be >= 1");
  if (threads < 1) throw ConfigError("config: threads must be >= 1");
  if (train.dim < 2) throw ConfigError("config: dim must be >= 2");
  if (train.gamma_label <= 0 || train.gamma_meta <= 0 || train.gamma_corpus <= 0)
    throw ConfigError("config: margins must be positive");
  if (train.negatives < 1) throw ConfigError("config: negatives must be >= 1");
  if (train.lr <= 0) throw ConfigError("config: lr must be positive");
  if (train.epochs < 0) throw ConfigError("config: epochs must be >= 0");
  if (aug.beta < 0) throw ConfigError("config: beta must be >= 0");
  if (aug.kappa <= 0) throw ConfigError("config: kappa must be positive");
  if (aug.top_n < 1) throw ConfigError("config: top_n must be >= 1");
  if (aug.length < 0) throw ConfigError("config: synth_len must be >= 0");
  if (cnn.maps < 1) throw ConfigError("config: clf_maps must be >= 1");
  if (cnn.widths.empty()) throw ConfigError("config: clf_widths must be non-empty");
  for (int w : cnn.widths)
    if (w < 1) throw ConfigError("config: clf_widths entries must be >= 1");
  if (cnn.batch < 1) throw ConfigError("config: clf_batch must be >= 1");
  if (cnn.lr <= 0) throw ConfigError("config: clf_lr must be positive");
  if (cnn.max_epochs < 1) throw ConfigError("config: clf_epochs must be >= 1");
  if (cnn.early_stop_acc <= 0 || cnn.early_stop_acc > 1)
    throw ConfigError("config: clf_early_acc must lie in (0, 1]");
  if (gen_affinity < 0 || gen_affinity > 1)
    throw ConfigError("config: gen_affinity must lie in [0, 1]");
  if (gen_meta_pool < 1) throw ConfigError("config: gen_meta_pool must be >= 1");
  if (gen_meta_per_doc < 0) throw ConfigError("config: gen_meta_per_doc must be >= 0");
  if (gen_meta_missing < 0 || gen_meta_missing > 1)
    throw ConfigError("config: gen_meta_missing must lie in [0, 1]");
}

inline PlantedSpec PipelineConfig::planted_spec() const {
  PlantedSpec spec = gen;
  spec.seed = mix_seed(seed, 0x6E5);
  spec.meta_types.clear();
  for (const auto& name : gen_meta_types)
    spec.meta_types.push_back({name, gen_affinity, gen_meta_pool, gen_meta_per_doc,
                               gen_meta_missing});
  return spec;
}

inline std::string PipelineConfig::canonical() const {
  std::string s;
  auto kv = [&s](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
  kv("corpus", corpus_path);
  kv("taxonomy", taxonomy_path);
  kv("out", out_dir);
  kv("min_count", std::to_string(min_count));
  kv("seed", std::to_string(seed));
  kv("deterministic", deterministic ? "1" : "0");
  kv("threads", std::to_string(threads));
  kv("dim", std::to_string(train.dim));
  kv("gamma_l", format_double(train.gamma_label));
  kv("gamma_m", format_double(train.gamma_meta));
  kv("gamma_c", format_double(train.gamma_corpus));
  kv("negatives", std::to_string(train.negatives));
  kv("lr", format_double(train.lr));
  kv("epochs", std::to_string(train.epochs));
  kv("use_hierarchy", train.use_hierarchy ? "1" : "0");
  kv("use_metadata", train.use_metadata ? "1" : "0");
  std::string excl;
  for (const auto& t : train.exclude_meta_types) excl += (excl.empty() ? "" : ",") + t;
  kv("exclude_meta_types", excl);
  kv("beta", std::to_string(aug.beta));
  kv("kappa", format_double(aug.kappa));
  kv("top_n", std::to_string(aug.top_n));
  kv("synth_len", std::to_string(aug.length));
  kv("clf_maps", std::to_string(cnn.maps));
  std::string widths;
  for (int w : cnn.widths) widths += (widths.empty() ? "" : ",") + std::to_string(w);
  kv("clf_widths", widths);
  kv("clf_batch", std::to_string(cnn.batch));
  kv("clf_lr", format_double(cnn.lr));
  kv("clf_epochs", std::to_string(cnn.max_epochs));
  kv("clf_early_acc", format_double(cnn.early_stop_acc));
  std::string branching;
  for (int b : gen.branching) branching += (branching.empty() ? "" : ",") + std::to_string(b);
  kv("gen_branching", branching);
  kv("gen_docs_per_leaf", std::to_string(gen.docs_per_leaf));
  kv("gen_shots", std::to_string(gen.train_shots));
  kv("gen_doc_len", std::to_string(gen.doc_len));
  kv("gen_leaf_words", std::to_string(gen.leaf_words));
  kv("gen_parent_words", std::to_string(gen.parent_words));
  kv("gen_shared_words", std::to_string(gen.shared_words));
  kv("gen_mix_leaf", format_double(gen.mix_leaf));
  kv("gen_mix_parent", format_double(gen.mix_parent));
  std::string types;
  for (const auto& t : gen_meta_types) types += (types.empty() ? "" : ",") + t;
  kv("gen_meta_types", types);
  kv("gen_affinity", format_double(gen_affinity));
  kv("gen_meta_pool", std::to_string(gen_meta_pool));
  kv("gen_meta_per_doc", std::to_string(gen_meta_per_doc));
  kv("gen_meta_missing", format_double(gen_meta_missing));
  return s;
}

}  // namespace spherecat
