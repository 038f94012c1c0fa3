#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "spherecat/embedding.hpp"
#include "spherecat/trainer.hpp"
#include "helpers.hpp"

using spherecat::EntityKind;
using spherecat::EntityRef;
using spherecat::Vec;

namespace {

Vec unit(std::vector<double> v) {
  double n = testutil::norm(v);
  for (auto& x : v) x /= n;
  return v;
}

// Random point on the sphere with every margin strictly off its boundary,
// so finite differences never straddle the indicator kink.
bool off_boundary(double pos, const std::vector<double>& neg_scores, double gamma, double slack) {
  for (double n : neg_scores)
    if (std::fabs(pos - n - gamma) < slack) return false;
  return true;
}

spherecat::EmbeddingTable tiny_table(int dim, int labels, int docs, int words,
                                     std::uint64_t seed) {
  std::vector<std::string> lab, doc, wrd;
  for (int i = 0; i < labels; ++i) lab.push_back("l" + std::to_string(i));
  for (int i = 0; i < docs; ++i) doc.push_back("d" + std::to_string(i));
  for (int i = 0; i < words; ++i) wrd.push_back("w" + std::to_string(i));
  spherecat::EmbeddingTable t(dim, lab, {}, doc, wrd);
  std::mt19937_64 rng(seed);
  t.init_random_unit(rng);
  return t;
}

}  // namespace

TEST_CASE("margin term clamps satisfied pairs to zero", "[embed]") {
  CHECK(spherecat::margin_term(0.9, 0.5, 0.2) == 0.0);
  CHECK(spherecat::margin_term(0.5, 0.6, 0.2) == Catch::Approx(-0.3));
  CHECK(spherecat::margin_term(0.2, 0.0, 0.2) == 0.0);
}

TEST_CASE("hierarchy gradients on the worked 2-d instance", "[embed]") {
  Vec child{1.0, 0.0}, parent{0.0, 1.0};
  std::vector<Vec> corrupted{{1.0, 0.0}};
  auto g = spherecat::hierarchy_grads(child, parent, corrupted, 0.2);
  CHECK(g.child[0] == Catch::Approx(-1.0));
  CHECK(g.child[1] == Catch::Approx(1.0));
  CHECK(g.parent[0] == Catch::Approx(1.0));
  CHECK(g.parent[1] == Catch::Approx(0.0).margin(1e-15));
  CHECK(g.negatives[0][0] == Catch::Approx(-1.0));
  CHECK(g.negatives[0][1] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("satisfied margins produce exactly zero gradients", "[embed]") {
  Vec child = unit({1.0, 0.2});
  Vec parent = unit({0.9, 0.3});
  std::vector<Vec> corrupted{unit({-1.0, 0.0}), unit({-0.8, -0.6})};
  auto g = spherecat::hierarchy_grads(child, parent, corrupted, 0.2);
  for (double x : g.child) CHECK(x == 0.0);
  for (double x : g.parent) CHECK(x == 0.0);
  for (const auto& n : g.negatives)
    for (double x : n) CHECK(x == 0.0);
}

TEST_CASE("hierarchy gradients match finite differences", "[embed]") {
  std::mt19937_64 rng(42);
  const int p = 5;
  int done = 0;
  while (done < 100) {
    Vec child = spherecat::random_unit_vector(p, rng);
    Vec parent = spherecat::random_unit_vector(p, rng);
    std::vector<Vec> corrupted;
    for (int j = 0; j < 3; ++j) corrupted.push_back(spherecat::random_unit_vector(p, rng));
    double pos = testutil::dot(child, parent);
    std::vector<double> neg_scores;
    for (const auto& n : corrupted) neg_scores.push_back(testutil::dot(child, n));
    if (!off_boundary(pos, neg_scores, 0.2, 1e-3)) continue;
    ++done;

    auto g = spherecat::hierarchy_grads(child, parent, corrupted, 0.2);

    auto fd_child = testutil::finite_diff(
        [&](const Vec& x) { return spherecat::hierarchy_objective(x, parent, corrupted, 0.2); },
        child);
    CHECK(testutil::max_grad_rel_err(g.child, fd_child) < 1e-4);

    auto fd_parent = testutil::finite_diff(
        [&](const Vec& x) { return spherecat::hierarchy_objective(child, x, corrupted, 0.2); },
        parent);
    CHECK(testutil::max_grad_rel_err(g.parent, fd_parent) < 1e-4);

    for (std::size_t j = 0; j < corrupted.size(); ++j) {
      auto fd_neg = testutil::finite_diff(
          [&](const Vec& x) {
            auto c2 = corrupted;
            c2[j] = x;
            return spherecat::hierarchy_objective(child, parent, c2, 0.2);
          },
          corrupted[j]);
      CHECK(testutil::max_grad_rel_err(g.negatives[j], fd_neg) < 1e-4);
    }
  }
}

TEST_CASE("empty observable and word sets give zero gradients", "[embed]") {
  Vec doc = unit({0.6, 0.8});
  auto g = spherecat::metadata_corpus_grads(doc, {}, {}, {unit({1.0, 0.0})}, 0.2, 0.2);
  for (double x : g.doc) CHECK(x == 0.0);
  for (const auto& n : g.neg_docs)
    for (double x : n) CHECK(x == 0.0);
}

TEST_CASE("single violated observable pair has the textbook gradient", "[embed]") {
  Vec d{1.0, 0.0}, z{0.0, 1.0}, nd{0.0, 1.0};
  // d.z = 0, nd.z = 1: violation. grad(d)=z, grad(z)=d-nd, grad(nd)=-z.
  auto g = spherecat::metadata_corpus_grads(d, {z}, {}, {nd}, 0.2, 0.2);
  CHECK(g.doc[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(g.doc[1] == Catch::Approx(1.0));
  CHECK(g.observables[0][0] == Catch::Approx(1.0));
  CHECK(g.observables[0][1] == Catch::Approx(-1.0));
  CHECK(g.neg_docs[0][0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(g.neg_docs[0][1] == Catch::Approx(-1.0));
}

TEST_CASE("metadata and word gradients match finite differences", "[embed]") {
  std::mt19937_64 rng(97);
  const int p = 5;
  const double gm = 0.2, gc = 0.25;
  int done = 0;
  while (done < 100) {
    Vec doc = spherecat::random_unit_vector(p, rng);
    std::vector<Vec> obs{spherecat::random_unit_vector(p, rng),
                         spherecat::random_unit_vector(p, rng)};
    std::vector<Vec> words{spherecat::random_unit_vector(p, rng),
                           spherecat::random_unit_vector(p, rng),
                           spherecat::random_unit_vector(p, rng)};
    std::vector<Vec> negs{spherecat::random_unit_vector(p, rng),
                          spherecat::random_unit_vector(p, rng)};

    bool ok = true;
    for (const auto& z : obs) {
      double pos = testutil::dot(doc, z);
      for (const auto& nd : negs) ok &= std::fabs(pos - testutil::dot(nd, z) - gm) > 1e-3;
    }
    for (const auto& w : words) {
      double pos = testutil::dot(w, doc);
      for (const auto& nd : negs) ok &= std::fabs(pos - testutil::dot(w, nd) - gc) > 1e-3;
    }
    if (!ok) continue;
    ++done;

    auto g = spherecat::metadata_corpus_grads(doc, obs, words, negs, gm, gc);

    auto obj_doc = [&](const Vec& x) {
      return spherecat::metadata_corpus_objective(x, obs, words, negs, gm, gc);
    };
    CHECK(testutil::max_grad_rel_err(g.doc, testutil::finite_diff(obj_doc, doc)) < 1e-4);

    for (std::size_t zi = 0; zi < obs.size(); ++zi) {
      auto fd = testutil::finite_diff(
          [&](const Vec& x) {
            auto o2 = obs;
            o2[zi] = x;
            return spherecat::metadata_corpus_objective(doc, o2, words, negs, gm, gc);
          },
          obs[zi]);
      CHECK(testutil::max_grad_rel_err(g.observables[zi], fd) < 1e-4);
    }
    for (std::size_t wi = 0; wi < words.size(); ++wi) {
      auto fd = testutil::finite_diff(
          [&](const Vec& x) {
            auto w2 = words;
            w2[wi] = x;
            return spherecat::metadata_corpus_objective(doc, obs, w2, negs, gm, gc);
          },
          words[wi]);
      CHECK(testutil::max_grad_rel_err(g.words[wi], fd) < 1e-4);
    }
    for (std::size_t j = 0; j < negs.size(); ++j) {
      auto fd = testutil::finite_diff(
          [&](const Vec& x) {
            auto n2 = negs;
            n2[j] = x;
            return spherecat::metadata_corpus_objective(doc, obs, words, n2, gm, gc);
          },
          negs[j]);
      CHECK(testutil::max_grad_rel_err(g.neg_docs[j], fd) < 1e-4);
    }
  }
}

TEST_CASE("pair enumeration respects ablation switches", "[embed]") {
  auto h = spherecat::parse_taxonomy({{"root", "A"}, {"A", "a1"}, {"A", "a2"}});
  testutil::TempDir dir;
  testutil::write_file(
      dir.file("c.jsonl"),
      R"({"id":"d1","text":"x y","metadata":{"user":["u1"],"tag":["t1"]},"label":"a1","split":"train"})"
      "\n"
      R"({"id":"d2","text":"x","metadata":{"user":["u2"]},"label":null,"split":"test"})"
      "\n");
  auto c = spherecat::load_corpus(dir.file("c.jsonl"), h);

  spherecat::TrainConfig cfg;
  auto pairs = spherecat::enumerate_pairs(c, h, cfg);
  // 3 edges + d1: 1 label + 2 metadata + 2 words; d2: 1 metadata + 1 word.
  CHECK(pairs.size() == 10);

  cfg.use_hierarchy = false;
  CHECK(spherecat::enumerate_pairs(c, h, cfg).size() == 7);

  cfg.use_hierarchy = true;
  cfg.use_metadata = false;
  CHECK(spherecat::enumerate_pairs(c, h, cfg).size() == 7);

  cfg.use_metadata = true;
  cfg.exclude_meta_types = {"tag"};
  CHECK(spherecat::enumerate_pairs(c, h, cfg).size() == 9);
}

TEST_CASE("test documents never contribute their gold label", "[embed]") {
  auto h = spherecat::parse_taxonomy({{"root", "A"}, {"A", "a1"}, {"A", "a2"}});
  testutil::TempDir dir;
  testutil::write_file(dir.file("c.jsonl"),
                       R"({"id":"d1","text":"x","metadata":{},"label":"a1","split":"test"})"
                       "\n");
  auto c = spherecat::load_corpus(dir.file("c.jsonl"), h);
  spherecat::TrainConfig cfg;
  for (const auto& p : spherecat::enumerate_pairs(c, h, cfg))
    CHECK(p.type != spherecat::PairType::ObsLabel);
}

TEST_CASE("update step keeps norms and tangency tight", "[embed]") {
  auto table = tiny_table(16, 6, 10, 20, 5);
  spherecat::TrainConfig cfg;
  cfg.dim = 16;
  std::mt19937_64 rng(77);
  spherecat::detail::SgdScratch ws;
  std::uniform_int_distribution<int> doc_pick(0, 9), word_pick(0, 19), label_pick(1, 5);
  double worst_tangency = 0.0;
  for (int i = 0; i < 2000; ++i) {
    spherecat::PosPair pair;
    switch (i % 3) {
      case 0: pair = {spherecat::PairType::Edge, label_pick(rng), 0}; break;
      case 1: pair = {spherecat::PairType::ObsLabel, doc_pick(rng), label_pick(rng)}; break;
      default: pair = {spherecat::PairType::DocWord, doc_pick(rng), word_pick(rng)}; break;
    }
    auto stats = spherecat::sgd_pair_step(table, pair, cfg, 0.025, rng, ws);
    worst_tangency = std::max(worst_tangency, stats.max_tangency_abs);
  }
  CHECK(table.max_unit_norm_error() < 1e-6);
  CHECK(worst_tangency < 1e-10);
}

TEST_CASE("satisfied pairs leave the table bit-identical", "[embed]") {
  // Make the (child=1, parent=0) edge beat every corrupted parent by a wide
  // margin: child and parent aligned, all other labels anti-aligned.
  auto table = tiny_table(8, 5, 3, 3, 9);
  Vec aligned = unit({1, 1, 1, 1, 1, 1, 1, 1});
  Vec anti = aligned;
  for (auto& x : anti) x = -x;
  auto assign = [&](std::span<double> dst, const Vec& src) {
    std::copy(src.begin(), src.end(), dst.begin());
  };
  assign(table.label(0), aligned);
  assign(table.label(1), aligned);
  for (int l = 2; l < 5; ++l) assign(table.label(l), anti);

  std::vector<std::vector<double>> snapshot;
  for (int l = 0; l < 5; ++l)
    snapshot.emplace_back(table.label(l).begin(), table.label(l).end());

  spherecat::TrainConfig cfg;
  cfg.dim = 8;
  std::mt19937_64 rng(13);
  spherecat::detail::SgdScratch ws;
  auto stats = spherecat::sgd_pair_step(table, {spherecat::PairType::Edge, 1, 0}, cfg, 0.025,
                                        rng, ws);
  CHECK(stats.entities_touched == 0);
  for (int l = 0; l < 5; ++l) {
    auto now = table.label(l);
    for (std::size_t i = 0; i < now.size(); ++i) REQUIRE(now[i] == snapshot[static_cast<std::size_t>(l)][i]);
  }
}

TEST_CASE("edge step skips when no corrupted parent exists", "[embed]") {
  auto table = tiny_table(8, 2, 3, 3, 21);
  std::vector<std::vector<double>> snapshot;
  for (int l = 0; l < 2; ++l)
    snapshot.emplace_back(table.label(l).begin(), table.label(l).end());
  spherecat::TrainConfig cfg;
  cfg.dim = 8;
  std::mt19937_64 rng(1);
  spherecat::detail::SgdScratch ws;
  auto stats = spherecat::sgd_pair_step(table, {spherecat::PairType::Edge, 1, 0}, cfg, 0.025,
                                        rng, ws);
  CHECK(stats.entities_touched == 0);
  for (int l = 0; l < 2; ++l) {
    auto now = table.label(l);
    for (std::size_t i = 0; i < now.size(); ++i) REQUIRE(now[i] == snapshot[static_cast<std::size_t>(l)][i]);
  }
}

TEST_CASE("training is deterministic for a fixed seed", "[embed]") {
  spherecat::PlantedSpec spec;
  spec.branching = {2, 2};
  spec.docs_per_leaf = 8;
  spec.train_shots = 3;
  spec.doc_len = 12;
  spec.leaf_words = 4;
  spec.parent_words = 4;
  spec.shared_words = 12;
  spec.seed = 11;
  auto data = testutil::make_planted(spec);

  spherecat::TrainConfig cfg;
  cfg.dim = 12;
  cfg.epochs = 3;
  cfg.seed = 123;
  auto a = spherecat::train_embeddings(data.corpus, data.h, cfg);
  auto b = spherecat::train_embeddings(data.corpus, data.h, cfg);
  for (int k = 0; k < 4; ++k) {
    auto kind = static_cast<EntityKind>(k);
    REQUIRE(a.count(kind) == b.count(kind));
    for (int i = 0; i < a.count(kind); ++i) {
      auto va = a.vec({kind, i});
      auto vb = b.vec({kind, i});
      for (int j = 0; j < a.dim(); ++j) REQUIRE(va[j] == vb[j]);
    }
  }
  CHECK(a.max_unit_norm_error() < 1e-6);
}

TEST_CASE("training increases the frozen-sample objective", "[embed][slow]") {
  spherecat::PlantedSpec spec;
  spec.branching = {2, 3};
  spec.docs_per_leaf = 9;  // 54 documents total
  spec.train_shots = 4;
  spec.doc_len = 15;
  spec.seed = 3;
  auto data = testutil::make_planted(spec);

  spherecat::TrainConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 5;
  cfg.seed = 7;

  // Rebuild the untrained table exactly as the trainer does, freeze a sample
  // set, and compare the objective before and after training.
  std::vector<std::string> doc_ids;
  for (const auto& d : data.corpus.docs) doc_ids.push_back(d.id);
  spherecat::EmbeddingTable fresh(cfg.dim, data.h.ids, data.corpus.meta.ids, doc_ids,
                                  data.corpus.vocab.words);
  std::mt19937_64 init_rng(spherecat::mix_seed(cfg.seed, 0x1417));
  fresh.init_random_unit(init_rng);

  auto pairs = spherecat::enumerate_pairs(data.corpus, data.h, cfg);
  std::mt19937_64 freeze_rng(99);
  auto frozen = spherecat::freeze_negative_samples(pairs, fresh, cfg, freeze_rng);
  double before = spherecat::evaluate_objective(fresh, frozen, cfg);

  auto trained = spherecat::train_embeddings(data.corpus, data.h, cfg);
  double after = spherecat::evaluate_objective(trained, frozen, cfg);
  CHECK(after > before);
}

TEST_CASE("trainer validates inputs", "[embed]") {
  auto h = spherecat::parse_taxonomy({{"root", "A"}, {"A", "a1"}, {"A", "a2"}});
  spherecat::Corpus empty;
  spherecat::TrainConfig cfg;
  CHECK_THROWS_AS(spherecat::train_embeddings(empty, h, cfg), spherecat::DataError);

  testutil::TempDir dir;
  testutil::write_file(dir.file("c.jsonl"),
                       R"({"id":"d1","text":"a","metadata":{},"label":"a1","split":"train"})"
                       "\n");
  auto c = spherecat::load_corpus(dir.file("c.jsonl"), h);
  cfg.dim = 1;
  CHECK_THROWS_AS(spherecat::train_embeddings(c, h, cfg), spherecat::ConfigError);
  cfg.dim = 8;
  cfg.gamma_label = 0.0;
  CHECK_THROWS_AS(spherecat::train_embeddings(c, h, cfg), spherecat::ConfigError);
}

TEST_CASE("embedding dump survives a round trip", "[embed]") {
  auto table = tiny_table(10, 4, 6, 8, 33);
  testutil::TempDir dir;
  table.save(dir.file("emb.txt"));
  auto loaded = spherecat::EmbeddingTable::load(dir.file("emb.txt"));
  REQUIRE(loaded.dim() == table.dim());
  for (int k = 0; k < 4; ++k) {
    auto kind = static_cast<EntityKind>(k);
    REQUIRE(loaded.count(kind) == table.count(kind));
    for (int i = 0; i < table.count(kind); ++i) {
      CHECK(loaded.id_of({kind, i}) == table.id_of({kind, i}));
      auto va = table.vec({kind, i});
      auto vb = loaded.vec({kind, i});
      for (int j = 0; j < table.dim(); ++j) REQUIRE(va[j] == vb[j]);
    }
  }
  CHECK_THROWS_AS(spherecat::EmbeddingTable::load(dir.file("absent.txt")),
                  spherecat::MissingInputError);
}
