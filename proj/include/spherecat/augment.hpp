#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spherecat/corpus.hpp"
#include "spherecat/embedding.hpp"
#include "spherecat/errors.hpp"
#include "spherecat/sphere.hpp"
#include "spherecat/taxonomy.hpp"
#include "spherecat/util.hpp"

namespace spherecat {

struct AugmentConfig {
  int beta = 500;        // synthetic documents per category; 0 disables augmentation
  double kappa = 1000.0; // concentration of the document sampler
  int top_n = 50;        // candidate word neighborhood size
  int length = 0;        // tokens per synthetic document; 0: mean real train length
  std::uint64_t seed = 42;
};

struct SyntheticDocument {
  int category = -1;       // leaf that generated the document
  Vec doc_vec;             // sampled document direction
  std::vector<int> tokens; // WordIds drawn from the neighborhood of doc_vec
};

// Per-category training pools. `synthetic` and `real` are indexed by
// hierarchy node; synthetic entries point into `arena`, real entries into the
// corpus document array. Internal-node synthetic pools are subsets of the
// union of their children's pools, so arena documents are shared upward.
struct AugmentedSet {
  std::vector<SyntheticDocument> arena;
  std::vector<std::vector<int>> synthetic;
  std::vector<std::vector<int>> real;
};

// The candidate neighborhood of a document vector: the top_n words by dot
// product, ties broken by ascending WordId.
inline std::vector<int> word_neighborhood(std::span<const double> doc_vec,
                                          const EmbeddingTable& table, int top_n) {
  const int n_words = table.count(EntityKind::Word);
  std::vector<std::pair<double, int>> scored(n_words);
  for (int w = 0; w < n_words; ++w) scored[w] = {dot(table.word(w), doc_vec), w};
  auto better = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  int keep = std::min(top_n, n_words);
  std::nth_element(scored.begin(), scored.begin() + keep - 1, scored.end(), better);
  scored.resize(keep);
  std::sort(scored.begin(), scored.end(), better);
  std::vector<int> out(keep);
  for (int i = 0; i < keep; ++i) out[i] = scored[i].second;
  return out;
}

// Draws `length` tokens i.i.d. (with replacement) from the softmax of
// exp(w . doc_vec) restricted to the top_n neighborhood of doc_vec.
inline std::vector<int> draw_synthetic_tokens(std::span<const double> doc_vec,
                                              const EmbeddingTable& table, int top_n, int length,
                                              std::mt19937_64& rng) {
  if (top_n < 1) throw ConfigError("draw_synthetic_tokens: top_n must be >= 1");
  if (length < 1) throw ConfigError("draw_synthetic_tokens: length must be >= 1");
  if (table.count(EntityKind::Word) == 0)
    throw DataError("draw_synthetic_tokens: empty vocabulary");
  std::vector<int> cand = word_neighborhood(doc_vec, table, top_n);
  std::vector<double> prob(cand.size());
  double mx = -1e300;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    prob[i] = dot(table.word(cand[i]), doc_vec);
    mx = std::max(mx, prob[i]);
  }
  // softmax of the scores, shifted by the max for stability
  double z = 0.0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    prob[i] = std::exp(prob[i] - mx);
    z += prob[i];
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> tokens(length);
  for (int t = 0; t < length; ++t) {
    double u = unif(rng) * z;
    double acc = 0.0;
    int picked = static_cast<int>(cand.size()) - 1;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      acc += prob[i];
      if (u <= acc) {
        picked = static_cast<int>(i);
        break;
      }
    }
    tokens[t] = cand[picked];
  }
  return tokens;
}

// Synthesizes `beta` documents for one leaf: each document direction is a
// vMF(leaf embedding, kappa) draw and its tokens come from the direction's
// word neighborhood.
inline std::vector<SyntheticDocument> synthesize_leaf_docs(int leaf, const EmbeddingTable& table,
                                                           int beta, double kappa, int top_n,
                                                           int length, std::mt19937_64& rng) {
  if (beta < 1) throw ConfigError("synthesize_leaf_docs: beta must be >= 1");
  if (kappa <= 0.0) throw ConfigError("synthesize_leaf_docs: kappa must be positive");
  std::vector<SyntheticDocument> out;
  out.reserve(beta);
  auto mu = table.label(leaf);
  for (int b = 0; b < beta; ++b) {
    SyntheticDocument d;
    d.category = leaf;
    d.doc_vec = sample_vmf(mu, kappa, rng);
    d.tokens = draw_synthetic_tokens(d.doc_vec, table, top_n, length, rng);
    out.push_back(std::move(d));
  }
  return out;
}

// Labeled train documents attached to each node: a leaf owns its own
// documents, an internal node the union over its leaf descendants.
inline std::vector<std::vector<int>> propagate_real_train_docs(const Corpus& corpus,
                                                               const LabelHierarchy& h) {
  std::vector<std::vector<int>> real(h.size());
  for (int d = 0; d < corpus.size(); ++d)
    if (corpus.docs[d].train && corpus.docs[d].gold_label >= 0)
      real[corpus.docs[d].gold_label].push_back(d);
  for (int v : bottom_up_order(h))
    for (int c : h.children[v]) real[v].insert(real[v].end(), real[c].begin(), real[c].end());
  return real;
}

namespace detail {

// First `k` elements of a partial Fisher-Yates shuffle: a uniform sample
// without replacement.
inline std::vector<int> sample_without_replacement(const std::vector<int>& pool, int k,
                                                   std::mt19937_64& rng) {
  std::vector<int> items(pool);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(items.size()) - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(k);
  return items;
}

}  // namespace detail

// Bottom-up construction of the per-category pools: every leaf synthesizes
// beta fresh documents; every internal node draws floor(beta/k) documents
// without replacement from each of its k children, plus one extra from each
// of the first beta mod k children, so every pool holds exactly beta
// documents. beta = 0 disables augmentation and leaves all pools empty.
inline AugmentedSet augment_hierarchy(const LabelHierarchy& h, const EmbeddingTable& table,
                                      const Corpus& corpus, const AugmentConfig& cfg) {
  if (cfg.beta < 0) throw ConfigError("augment: beta must be >= 0");
  AugmentedSet set;
  set.synthetic.assign(h.size(), {});
  set.real = propagate_real_train_docs(corpus, h);
  if (cfg.beta == 0) return set;

  int length = cfg.length;
  if (length == 0) {
    long long total = 0, n = 0;
    for (const auto& d : corpus.docs)
      if (d.train && d.gold_label >= 0) {
        total += static_cast<long long>(d.tokens.size());
        ++n;
      }
    if (n == 0)
      throw DataError("augment: no labeled train documents to infer synthetic length from");
    length = std::max(1, static_cast<int>(std::llround(static_cast<double>(total) / n)));
  }

  for (int v : bottom_up_order(h)) {
    if (h.is_leaf(v)) {
      std::mt19937_64 rng(mix_seed(cfg.seed, 0xA000 + static_cast<std::uint64_t>(v)));
      auto docs = synthesize_leaf_docs(v, table, cfg.beta, cfg.kappa, cfg.top_n, length, rng);
      set.synthetic[v].reserve(docs.size());
      for (auto& d : docs) {
        set.synthetic[v].push_back(static_cast<int>(set.arena.size()));
        set.arena.push_back(std::move(d));
      }
    } else {
      const auto& ch = h.children[v];
      const int k = static_cast<int>(ch.size());
      if (k > cfg.beta)
        throw DataError("augment: beta=" + std::to_string(cfg.beta) + " is smaller than the " +
                        std::to_string(k) + " children of " + h.ids[v]);
      std::mt19937_64 rng(mix_seed(cfg.seed, 0xB000 + static_cast<std::uint64_t>(v)));
      int quota = cfg.beta / k;
      int extra = cfg.beta % k;
      for (int ci = 0; ci < k; ++ci) {
        int want = quota + (ci < extra ? 1 : 0);
        if (want == 0) continue;
        auto picked = detail::sample_without_replacement(set.synthetic[ch[ci]], want, rng);
        set.synthetic[v].insert(set.synthetic[v].end(), picked.begin(), picked.end());
      }
    }
  }
  return set;
}

// Audit/classifier dump: one JSON line per (category, document) membership,
// categories in node index order, documents in pool order. Token ids are
// indices into the table's word rows, so the table maps them to strings.
inline void save_augmented(const AugmentedSet& set, const LabelHierarchy& h,
                           const EmbeddingTable& table, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write augmented set: " + path);
  for (int v = 0; v < h.size(); ++v) {
    for (int idx : set.synthetic[v]) {
      nlohmann::ordered_json j;
      j["category"] = h.ids[v];
      auto& toks = j["tokens"] = nlohmann::ordered_json::array();
      for (int w : set.arena[idx].tokens) toks.push_back(table.id_of({EntityKind::Word, w}));
      j["synthetic"] = true;
      f << j.dump() << '\n';
    }
  }
  if (!f) throw DataError("short write to augmented set: " + path);
}

// Reloads a dump into per-node token-id pools against the same vocabulary.
inline std::vector<std::vector<std::vector<int>>> load_augmented(const std::string& path,
                                                                 const LabelHierarchy& h,
                                                                 const Vocabulary& vocab) {
  std::ifstream f(path);
  if (!f) throw MissingInputError("augmented set not found: " + path);
  std::vector<std::vector<std::vector<int>>> pools(h.size());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("augmented set line " + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("category") || !j["category"].is_string() ||
        !j.contains("tokens") || !j["tokens"].is_array())
      throw DataError("augmented set line " + std::to_string(lineno) + ": malformed record");
    int v = h.require(j["category"].get<std::string>());
    std::vector<int> tokens;
    tokens.reserve(j["tokens"].size());
    for (const auto& t : j["tokens"]) {
      if (!t.is_string())
        throw DataError("augmented set line " + std::to_string(lineno) + ": token is not a string");
      int w = vocab.id(t.get<std::string>());
      if (w < 0)
        throw DataError("augmented set line " + std::to_string(lineno) +
                        ": token not in vocabulary: " + t.get<std::string>());
      tokens.push_back(w);
    }
    pools[v].push_back(std::move(tokens));
  }
  return pools;
}

}  // namespace spherecat
