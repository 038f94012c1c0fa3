#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "spherecat/corpus.hpp"
#include "spherecat/embedding.hpp"
#include "spherecat/errors.hpp"
#include "spherecat/log.hpp"
#include "spherecat/sphere.hpp"
#include "spherecat/taxonomy.hpp"
#include "spherecat/util.hpp"

namespace spherecat {

struct TrainConfig {
  int dim = 100;
  double gamma_label = 0.2;   // margin for (parent, child) label pairs
  double gamma_meta = 0.2;    // margin for (observable, document) pairs
  double gamma_corpus = 0.2;  // margin for (document, word) pairs
  int negatives = 5;          // corrupted samples per positive pair
  double lr = 0.025;          // initial step size, decays linearly to lr * 1e-4
  int epochs = 10;
  std::uint64_t seed = 42;
  int threads = 1;            // 1: deterministic; >1: lock-free parallel updates
  bool use_hierarchy = true;  // drop the taxonomy term when false
  bool use_metadata = true;   // drop metadata observables when false
  std::vector<std::string> exclude_meta_types;  // drop specific metadata types
};

// min(0, pos - neg - gamma): zero once the positive score beats the corrupted
// one by the margin, the (negative) violation otherwise.
inline double margin_term(double pos, double neg, double gamma) {
  return std::min(0.0, pos - neg - gamma);
}

// ---------------------------------------------------------------------------
// Euclidean gradients of the two objective terms. Both are exact gradients of
// the corresponding *_objective value below, with the indicator
// 1(pos - neg < gamma) gating each corrupted sample.
// ---------------------------------------------------------------------------

struct HierarchyGrads {
  Vec child, parent;
  std::vector<Vec> negatives;  // aligned with the corrupted-parent list
};

// d/dx of sum_j min(0, c.p - c.n_j - gamma) for child c, parent p and
// corrupted parents n_j.
inline HierarchyGrads hierarchy_grads(std::span<const double> child, std::span<const double> parent,
                                      const std::vector<Vec>& corrupted, double gamma) {
  const std::size_t p = child.size();
  HierarchyGrads g;
  g.child.assign(p, 0.0);
  g.parent.assign(p, 0.0);
  g.negatives.assign(corrupted.size(), Vec(p, 0.0));
  const double pos = dot(child, parent);
  for (std::size_t j = 0; j < corrupted.size(); ++j) {
    if (pos - dot(child, corrupted[j]) >= gamma) continue;
    for (std::size_t i = 0; i < p; ++i) {
      g.child[i] += parent[i] - corrupted[j][i];
      g.parent[i] += child[i];
      g.negatives[j][i] -= child[i];
    }
  }
  return g;
}

inline double hierarchy_objective(std::span<const double> child, std::span<const double> parent,
                                  const std::vector<Vec>& corrupted, double gamma) {
  double pos = dot(child, parent);
  double j = 0.0;
  for (const Vec& n : corrupted) j += margin_term(pos, dot(child, n), gamma);
  return j;
}

struct MetaCorpusGrads {
  Vec doc;
  std::vector<Vec> observables;  // labels and metadata instances of the document
  std::vector<Vec> words;        // one entry per token occurrence
  std::vector<Vec> neg_docs;     // corrupted documents, shared by all pairs
};

// Gradients of the per-document term
//   sum_z sum_d' min(0, d.z - d'.z - gm) + sum_i sum_d' min(0, w_i.d - w_i.d' - gc)
// where z ranges over observables, w_i over token occurrences and d' over the
// corrupted documents.
inline MetaCorpusGrads metadata_corpus_grads(std::span<const double> doc,
                                             const std::vector<Vec>& observables,
                                             const std::vector<Vec>& words,
                                             const std::vector<Vec>& neg_docs, double gamma_meta,
                                             double gamma_corpus) {
  const std::size_t p = doc.size();
  MetaCorpusGrads g;
  g.doc.assign(p, 0.0);
  g.observables.assign(observables.size(), Vec(p, 0.0));
  g.words.assign(words.size(), Vec(p, 0.0));
  g.neg_docs.assign(neg_docs.size(), Vec(p, 0.0));
  for (std::size_t zi = 0; zi < observables.size(); ++zi) {
    const Vec& z = observables[zi];
    double pos = dot(doc, z);
    for (std::size_t j = 0; j < neg_docs.size(); ++j) {
      if (pos - dot(neg_docs[j], z) >= gamma_meta) continue;
      for (std::size_t i = 0; i < p; ++i) {
        g.doc[i] += z[i];
        g.observables[zi][i] += doc[i] - neg_docs[j][i];
        g.neg_docs[j][i] -= z[i];
      }
    }
  }
  for (std::size_t wi = 0; wi < words.size(); ++wi) {
    const Vec& w = words[wi];
    double pos = dot(w, doc);
    for (std::size_t j = 0; j < neg_docs.size(); ++j) {
      if (pos - dot(w, neg_docs[j]) >= gamma_corpus) continue;
      for (std::size_t i = 0; i < p; ++i) {
        g.words[wi][i] += doc[i] - neg_docs[j][i];
        g.doc[i] += w[i];
        g.neg_docs[j][i] -= w[i];
      }
    }
  }
  return g;
}

inline double metadata_corpus_objective(std::span<const double> doc,
                                        const std::vector<Vec>& observables,
                                        const std::vector<Vec>& words,
                                        const std::vector<Vec>& neg_docs, double gamma_meta,
                                        double gamma_corpus) {
  double j = 0.0;
  for (const Vec& z : observables) {
    double pos = dot(doc, z);
    for (const Vec& nd : neg_docs) j += margin_term(pos, dot(nd, z), gamma_meta);
  }
  for (const Vec& w : words) {
    double pos = dot(w, doc);
    for (const Vec& nd : neg_docs) j += margin_term(pos, dot(w, nd), gamma_corpus);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Positive pair enumeration and the stochastic update step.
// ---------------------------------------------------------------------------

enum class PairType : std::uint8_t {
  Edge,      // a = child label, b = parent label
  ObsLabel,  // a = doc, b = label observable
  ObsMeta,   // a = doc, b = metadata observable
  DocWord,   // a = doc, b = word (one pair per token occurrence)
};

struct PosPair {
  PairType type;
  int a;
  int b;
};

// Every positive training pair, in a fixed deterministic order: taxonomy
// edges first, then per document its observables and token occurrences.
// Observables of a train document include its gold label; test documents
// contribute metadata only.
inline std::vector<PosPair> enumerate_pairs(const Corpus& corpus, const LabelHierarchy& h,
                                            const TrainConfig& cfg) {
  std::vector<PosPair> pairs;
  if (cfg.use_hierarchy)
    for (int v = 0; v < h.size(); ++v)
      if (h.parent[v] >= 0) pairs.push_back({PairType::Edge, v, h.parent[v]});
  std::vector<bool> excluded;
  if (!cfg.exclude_meta_types.empty()) {
    excluded.resize(corpus.meta.size(), false);
    for (int m = 0; m < corpus.meta.size(); ++m)
      for (const auto& t : cfg.exclude_meta_types)
        if (corpus.meta.types[m] == t) excluded[m] = true;
  }
  for (int d = 0; d < corpus.size(); ++d) {
    const Document& doc = corpus.docs[d];
    if (doc.train && doc.gold_label >= 0) pairs.push_back({PairType::ObsLabel, d, doc.gold_label});
    if (cfg.use_metadata)
      for (int m : doc.metadata)
        if (excluded.empty() || !excluded[m]) pairs.push_back({PairType::ObsMeta, d, m});
    for (int w : doc.tokens) pairs.push_back({PairType::DocWord, d, w});
  }
  return pairs;
}

struct StepStats {
  int entities_touched = 0;       // rows actually moved by this step
  double max_tangency_abs = 0.0;  // max |theta . grad_R| over moved rows
};

namespace detail {

// Scratch buffers reused across steps by one worker.
struct SgdScratch {
  std::vector<EntityRef> refs;
  std::vector<Vec> grads;
  std::vector<char> touched;
  std::vector<int> negs;

  int slot(EntityRef r, std::size_t dim) {
    for (std::size_t i = 0; i < refs.size(); ++i)
      if (refs[i] == r) return static_cast<int>(i);
    refs.push_back(r);
    if (grads.size() < refs.size()) {
      grads.emplace_back(dim, 0.0);
      touched.push_back(0);
    } else {
      std::fill(grads[refs.size() - 1].begin(), grads[refs.size() - 1].end(), 0.0);
      touched[refs.size() - 1] = 0;
    }
    return static_cast<int>(refs.size()) - 1;
  }

  void reset() { refs.clear(); }
};

inline int sample_excluding(std::mt19937_64& rng, int n, int skip1, int skip2) {
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (;;) {
    int v = pick(rng);
    if (v != skip1 && v != skip2) return v;
  }
}

}  // namespace detail

// One stochastic ascent step for a positive pair: sample corrupted samples,
// accumulate Euclidean gradients at the current point, then move every
// touched row along its tangent projection and renormalize. Rows whose
// accumulated gradient is zero (all margins satisfied) are left bit-for-bit
// untouched. Negative samples are corrupted parents for Edge pairs and
// corrupted documents otherwise; pairs with an empty corruption domain are
// skipped.
inline StepStats sgd_pair_step(EmbeddingTable& table, const PosPair& pair, const TrainConfig& cfg,
                               double alpha, std::mt19937_64& rng,
                               detail::SgdScratch& ws) {
  StepStats stats;
  const int dim = table.dim();
  const int n_labels = table.count(EntityKind::Label);
  const int n_docs = table.count(EntityKind::Doc);
  ws.reset();
  ws.negs.clear();

  EntityRef ra, rb;
  double gamma = 0.0;
  EntityKind neg_kind;
  int skip1 = -1, skip2 = -1;
  int neg_domain = 0;
  switch (pair.type) {
    case PairType::Edge:
      ra = {EntityKind::Label, pair.a};
      rb = {EntityKind::Label, pair.b};
      gamma = cfg.gamma_label;
      neg_kind = EntityKind::Label;
      skip1 = pair.a;
      skip2 = pair.b;
      neg_domain = n_labels - 2;
      break;
    case PairType::ObsLabel:
      ra = {EntityKind::Doc, pair.a};
      rb = {EntityKind::Label, pair.b};
      gamma = cfg.gamma_meta;
      neg_kind = EntityKind::Doc;
      skip1 = pair.a;
      neg_domain = n_docs - 1;
      break;
    case PairType::ObsMeta:
      ra = {EntityKind::Doc, pair.a};
      rb = {EntityKind::Meta, pair.b};
      gamma = cfg.gamma_meta;
      neg_kind = EntityKind::Doc;
      skip1 = pair.a;
      neg_domain = n_docs - 1;
      break;
    case PairType::DocWord:
      ra = {EntityKind::Doc, pair.a};
      rb = {EntityKind::Word, pair.b};
      gamma = cfg.gamma_corpus;
      neg_kind = EntityKind::Doc;
      skip1 = pair.a;
      neg_domain = n_docs - 1;
      break;
  }
  if (neg_domain <= 0) return stats;
  for (int j = 0; j < cfg.negatives; ++j)
    ws.negs.push_back(detail::sample_excluding(rng, table.count(neg_kind), skip1, skip2));

  auto va = table.vec(ra);
  auto vb = table.vec(rb);
  const double pos = dot(va, vb);
  int sa = ws.slot(ra, dim);
  int sb = ws.slot(rb, dim);

  for (int neg : ws.negs) {
    EntityRef rn{neg_kind, neg};
    auto vn = table.vec(rn);
    if (pair.type == PairType::Edge) {
      // corrupted parent: score is child . parent'
      if (pos - dot(va, vn) >= gamma) continue;
      int sn = ws.slot(rn, dim);
      for (int i = 0; i < dim; ++i) {
        ws.grads[sa][i] += vb[i] - vn[i];  // child
        ws.grads[sb][i] += va[i];          // parent
        ws.grads[sn][i] -= va[i];
      }
      ws.touched[sa] = ws.touched[sb] = ws.touched[sn] = 1;
    } else {
      // corrupted document: score is d' . z (or w . d')
      if (pos - dot(vn, vb) >= gamma) continue;
      int sn = ws.slot(rn, dim);
      for (int i = 0; i < dim; ++i) {
        ws.grads[sa][i] += vb[i];          // document
        ws.grads[sb][i] += va[i] - vn[i];  // observable or word
        ws.grads[sn][i] -= vb[i];
      }
      ws.touched[sa] = ws.touched[sb] = ws.touched[sn] = 1;
    }
  }

  // Ascent along the tangent projection, then back onto the sphere.
  for (std::size_t s = 0; s < ws.refs.size(); ++s) {
    if (!ws.touched[s]) continue;
    auto theta = table.vec(ws.refs[s]);
    Vec& g = ws.grads[s];
    double c = dot(std::span<const double>(g), std::span<const double>(theta));
    double tangency = 0.0;
    double nrm2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      double r = g[i] - c * theta[i];
      tangency += r * theta[i];
      double x = theta[i] + alpha * r;
      g[i] = x;  // reuse the buffer for the stepped point
      nrm2 += x * x;
    }
    stats.max_tangency_abs = std::max(stats.max_tangency_abs, std::abs(tangency));
    double inv = 1.0 / std::sqrt(nrm2);
    for (int i = 0; i < dim; ++i) theta[i] = g[i] * inv;
    ++stats.entities_touched;
  }
  return stats;
}

// A positive pair with its corrupted samples frozen, for reproducible
// objective evaluation.
struct FrozenPair {
  PosPair pair;
  std::vector<int> negatives;
};

inline std::vector<FrozenPair> freeze_negative_samples(const std::vector<PosPair>& pairs,
                                                       const EmbeddingTable& table,
                                                       const TrainConfig& cfg,
                                                       std::mt19937_64& rng) {
  std::vector<FrozenPair> out;
  out.reserve(pairs.size());
  const int n_labels = table.count(EntityKind::Label);
  const int n_docs = table.count(EntityKind::Doc);
  for (const PosPair& p : pairs) {
    FrozenPair fp{p, {}};
    if (p.type == PairType::Edge) {
      if (n_labels <= 2) continue;
      for (int j = 0; j < cfg.negatives; ++j)
        fp.negatives.push_back(detail::sample_excluding(rng, n_labels, p.a, p.b));
    } else {
      if (n_docs <= 1) continue;
      for (int j = 0; j < cfg.negatives; ++j)
        fp.negatives.push_back(detail::sample_excluding(rng, n_docs, p.a, -1));
    }
    out.push_back(std::move(fp));
  }
  return out;
}

// Value of the joint objective restricted to a frozen sample set. Holding
// the set fixed makes values comparable across training stages.
inline double evaluate_objective(const EmbeddingTable& table, const std::vector<FrozenPair>& set,
                                 const TrainConfig& cfg) {
  double j = 0.0;
  for (const FrozenPair& fp : set) {
    EntityRef ra, rb;
    double gamma;
    EntityKind nk;
    switch (fp.pair.type) {
      case PairType::Edge:
        ra = {EntityKind::Label, fp.pair.a};
        rb = {EntityKind::Label, fp.pair.b};
        gamma = cfg.gamma_label;
        nk = EntityKind::Label;
        break;
      case PairType::ObsLabel:
        ra = {EntityKind::Doc, fp.pair.a};
        rb = {EntityKind::Label, fp.pair.b};
        gamma = cfg.gamma_meta;
        nk = EntityKind::Doc;
        break;
      case PairType::ObsMeta:
        ra = {EntityKind::Doc, fp.pair.a};
        rb = {EntityKind::Meta, fp.pair.b};
        gamma = cfg.gamma_meta;
        nk = EntityKind::Doc;
        break;
      case PairType::DocWord:
      default:
        ra = {EntityKind::Doc, fp.pair.a};
        rb = {EntityKind::Word, fp.pair.b};
        gamma = cfg.gamma_corpus;
        nk = EntityKind::Doc;
        break;
    }
    auto va = table.vec(ra);
    auto vb = table.vec(rb);
    double pos = dot(va, vb);
    for (int neg : fp.negatives) {
      auto vn = table.vec({nk, neg});
      double s = fp.pair.type == PairType::Edge ? dot(va, vn) : dot(vn, vb);
      j += margin_term(pos, s, gamma);
    }
  }
  return j;
}

// ---------------------------------------------------------------------------
// Training driver.
// ---------------------------------------------------------------------------

// Joint embedding of labels, metadata, documents and words by stochastic
// Riemannian ascent over margin-ranking pairs. With threads == 1 the result
// is a deterministic function of (corpus, hierarchy, config); with more
// threads workers update the shared table lock-free and per-row unit norms
// still hold after every step.
inline EmbeddingTable train_embeddings(const Corpus& corpus, const LabelHierarchy& h,
                                       const TrainConfig& cfg) {
  if (corpus.docs.empty()) throw DataError("train_embeddings: empty corpus");
  if (cfg.dim < 2) throw ConfigError("train_embeddings: dim must be >= 2");
  if (cfg.negatives < 1) throw ConfigError("train_embeddings: negatives must be >= 1");
  if (cfg.lr <= 0.0) throw ConfigError("train_embeddings: lr must be positive");
  if (cfg.epochs < 0) throw ConfigError("train_embeddings: epochs must be >= 0");
  if (cfg.gamma_label <= 0.0 || cfg.gamma_meta <= 0.0 || cfg.gamma_corpus <= 0.0)
    throw ConfigError("train_embeddings: margins must be positive");

  std::vector<std::string> doc_ids;
  doc_ids.reserve(corpus.docs.size());
  for (const auto& d : corpus.docs) doc_ids.push_back(d.id);
  EmbeddingTable table(cfg.dim, h.ids, corpus.meta.ids, std::move(doc_ids), corpus.vocab.words);
  std::mt19937_64 init_rng(mix_seed(cfg.seed, 0x1417));
  table.init_random_unit(init_rng);

  std::vector<PosPair> pairs = enumerate_pairs(corpus, h, cfg);
  if (pairs.empty() || cfg.epochs == 0) return table;

  const std::uint64_t total_steps =
      static_cast<std::uint64_t>(pairs.size()) * static_cast<std::uint64_t>(cfg.epochs);
  const double floor = cfg.lr * 1e-4;
  std::atomic<std::uint64_t> step{0};

  std::vector<std::uint32_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0u);
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x5489));

  const int threads = std::max(1, cfg.threads);
  logging::debug("train_embeddings: " + std::to_string(pairs.size()) + " pairs/epoch, " +
                 std::to_string(cfg.epochs) + " epochs, " + std::to_string(threads) + " thread(s)");

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    auto run_range = [&](std::size_t lo, std::size_t hi, std::uint64_t salt) {
      std::mt19937_64 rng(mix_seed(cfg.seed, salt));
      detail::SgdScratch ws;
      for (std::size_t k = lo; k < hi; ++k) {
        std::uint64_t t = step.fetch_add(1, std::memory_order_relaxed);
        double alpha =
            std::max(floor, cfg.lr * (1.0 - static_cast<double>(t) / static_cast<double>(total_steps)));
        sgd_pair_step(table, pairs[order[k]], cfg, alpha, rng, ws);
      }
    };
    if (threads == 1) {
      run_range(0, order.size(), 0x9000 + static_cast<std::uint64_t>(epoch));
    } else {
      std::vector<std::thread> pool;
      std::size_t chunk = (order.size() + threads - 1) / threads;
      for (int w = 0; w < threads; ++w) {
        std::size_t lo = std::min(order.size(), static_cast<std::size_t>(w) * chunk);
        std::size_t hi = std::min(order.size(), lo + chunk);
        if (lo < hi)
          pool.emplace_back(run_range, lo, hi,
                            0x9000 + static_cast<std::uint64_t>(epoch) * 131 + w);
      }
      for (auto& th : pool) th.join();
    }
  }
  return table;
}

}  // namespace spherecat
