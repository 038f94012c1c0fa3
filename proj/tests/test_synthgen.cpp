#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>
#include <string>
#include <vector>

#include "spherecat/synthgen.hpp"
#include "helpers.hpp"

using spherecat::PlantedSpec;

namespace {

PlantedSpec small_spec() {
  PlantedSpec spec;
  spec.branching = {3};
  spec.docs_per_leaf = 10;
  spec.train_shots = 5;
  spec.doc_len = 12;
  spec.seed = 3;
  return spec;
}

// Contingency table of gold leaf vs metadata instance for one type prefix.
std::vector<std::vector<long long>> leaf_meta_table(const spherecat::Corpus& corpus,
                                                    const spherecat::LabelHierarchy& h,
                                                    const std::string& type) {
  auto leaves = h.leaves();
  std::map<int, std::size_t> leaf_slot;
  for (std::size_t i = 0; i < leaves.size(); ++i) leaf_slot[leaves[i]] = i;
  std::map<std::string, std::size_t> inst_slot;
  for (const auto& id : corpus.meta.ids)
    if (id.rfind(type + ":", 0) == 0 && !inst_slot.count(id)) inst_slot[id] = inst_slot.size();
  std::vector<std::vector<long long>> table(leaves.size(),
                                            std::vector<long long>(inst_slot.size(), 0));
  for (const auto& d : corpus.docs)
    for (int m : d.metadata) {
      const auto& id = corpus.meta.ids[static_cast<std::size_t>(m)];
      auto it = inst_slot.find(id);
      if (it != inst_slot.end()) ++table[leaf_slot.at(d.gold_label)][it->second];
    }
  return table;
}

}  // namespace

TEST_CASE("branching 3x4 yields 12 leaves under 16 labels", "[synthgen]") {
  PlantedSpec spec;
  spec.branching = {3, 4};
  spec.docs_per_leaf = 2;
  spec.train_shots = 1;
  spec.doc_len = 5;
  auto data = testutil::make_planted(spec);
  CHECK(data.h.size() == 16);  // root + 3 internal + 12 leaves
  CHECK(data.h.leaves().size() == 12);
  CHECK(data.corpus.size() == 24);
}

TEST_CASE("generation is byte-deterministic in the seed", "[synthgen]") {
  auto spec = small_spec();
  auto a = spherecat::generate_planted(spec);
  auto b = spherecat::generate_planted(spec);
  CHECK(a.taxonomy_text == b.taxonomy_text);
  CHECK(a.corpus_jsonl == b.corpus_jsonl);
  spec.seed = 4;
  auto c = spherecat::generate_planted(spec);
  CHECK(a.corpus_jsonl != c.corpus_jsonl);
}

TEST_CASE("generated files load as a labeled few-shot corpus", "[synthgen]") {
  auto spec = small_spec();
  auto data = testutil::make_planted(spec);
  REQUIRE(data.corpus.size() == 30);
  auto shots = spherecat::train_shots_per_leaf(data.corpus, data.h);
  for (int leaf : data.h.leaves()) CHECK(shots.at(leaf) == 5);
  for (const auto& d : data.corpus.docs) {
    REQUIRE(d.gold_label >= 0);
    CHECK(data.h.is_leaf(d.gold_label));
    CHECK(!d.tokens.empty());
  }
}

TEST_CASE("full affinity pins every metadata instance to one leaf", "[synthgen]") {
  auto spec = small_spec();
  spec.docs_per_leaf = 40;
  for (auto& mt : spec.meta_types) {
    mt.affinity = 1.0;
    mt.missing_rate = 0.0;
  }
  auto data = testutil::make_planted(spec);
  std::map<int, std::set<int>> leaves_of_instance;
  for (const auto& d : data.corpus.docs)
    for (int m : d.metadata) leaves_of_instance[m].insert(d.gold_label);
  REQUIRE(!leaves_of_instance.empty());
  for (const auto& [m, ls] : leaves_of_instance) CHECK(ls.size() == 1);
}

TEST_CASE("zero affinity makes metadata independent of the label", "[synthgen]") {
  auto spec = small_spec();
  spec.docs_per_leaf = 200;
  spec.train_shots = 5;
  spec.meta_types = {{"user", 0.0, 2, 1, 0.1}};
  for (std::uint64_t seed : {11u, 22u, 33u}) {
    spec.seed = seed;
    auto data = testutil::make_planted(spec);
    auto table = leaf_meta_table(data.corpus, data.h, "user");
    REQUIRE(table.size() == 3);
    REQUIRE(table[0].size() == 6);
    int df = (3 - 1) * (6 - 1);
    double stat = testutil::chi2_statistic(table);
    CHECK(stat < testutil::chi2_critical(df, testutil::kZ99));
  }
}

TEST_CASE("high affinity makes metadata predictive of the label", "[synthgen]") {
  auto spec = small_spec();
  spec.docs_per_leaf = 200;
  spec.meta_types = {{"user", 0.9, 2, 1, 0.1}};
  auto data = testutil::make_planted(spec);
  auto table = leaf_meta_table(data.corpus, data.h, "user");
  int df = (3 - 1) * (6 - 1);
  double stat = testutil::chi2_statistic(table);
  CHECK(stat > testutil::chi2_critical(df, testutil::kZ99));
}

TEST_CASE("planted word signal is learnable by nearest centroid", "[synthgen]") {
  PlantedSpec spec;
  spec.branching = {3, 4};
  spec.docs_per_leaf = 30;
  spec.train_shots = 5;
  spec.doc_len = 30;
  spec.seed = 7;
  // Half the tokens come from the leaf's exclusive topic words.
  REQUIRE(spec.mix_leaf >= 0.3);
  auto data = testutil::make_planted(spec);
  CHECK(testutil::nearest_centroid_accuracy(data.corpus, data.h) > 0.8);
}

TEST_CASE("inconsistent planted specs are rejected", "[synthgen]") {
  auto bad = small_spec();
  bad.train_shots = bad.docs_per_leaf + 1;
  CHECK_THROWS_AS(spherecat::generate_planted(bad), spherecat::ConfigError);

  bad = small_spec();
  bad.branching = {};
  CHECK_THROWS_AS(spherecat::generate_planted(bad), spherecat::ConfigError);

  bad = small_spec();
  bad.mix_leaf = 0.8;
  bad.mix_parent = 0.3;
  CHECK_THROWS_AS(spherecat::generate_planted(bad), spherecat::ConfigError);

  bad = small_spec();
  bad.meta_types[0].affinity = 1.5;
  CHECK_THROWS_AS(spherecat::generate_planted(bad), spherecat::ConfigError);
}

TEST_CASE("metadata knobs can silence a type", "[synthgen]") {
  auto spec = small_spec();
  spec.meta_types = {{"user", 0.9, 2, 0, 0.0}, {"tag", 0.9, 2, 1, 1.0}};
  auto data = testutil::make_planted(spec);
  for (const auto& d : data.corpus.docs) CHECK(d.metadata.empty());
  CHECK(data.corpus.meta.ids.empty());
}
