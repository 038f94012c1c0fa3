#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "spherecat/errors.hpp"
#include "spherecat/taxonomy.hpp"
#include "spherecat/util.hpp"

namespace spherecat {

struct MetaTypeSpec {
  std::string name = "user";
  double affinity = 0.9;    // probability an instance comes from the leaf's own pool
  int pool_per_leaf = 3;    // instances reserved per leaf
  int per_doc = 1;          // instances drawn per document
  double missing_rate = 0.1;  // probability a document carries no instance of this type
};

// A planted classification problem: a regular hierarchy, leaf- and
// parent-level topic vocabularies mixed with shared background words, and
// metadata whose class affinity is tunable. Token mixture and affinity
// control how much signal each factor carries.
struct PlantedSpec {
  std::vector<int> branching{3, 4};  // children per node, by depth
  int docs_per_leaf = 50;
  int train_shots = 5;               // labeled train documents per leaf
  int doc_len = 40;
  int leaf_words = 15;               // exclusive topic words per leaf
  int parent_words = 20;             // topic words per non-root internal node
  int shared_words = 80;             // background vocabulary
  double mix_leaf = 0.5;             // token share from the leaf topic
  double mix_parent = 0.3;           // token share from a non-root ancestor topic
  std::vector<MetaTypeSpec> meta_types{{"user", 0.9, 3, 1, 0.1}, {"tag", 0.9, 3, 1, 0.1}};
  std::uint64_t seed = 1;
};

struct PlantedCorpus {
  std::string taxonomy_text;  // parent<TAB>child lines
  std::string corpus_jsonl;   // one record per line, labels on every document
};

// Deterministically generates the corpus: same spec and seed, same bytes.
inline PlantedCorpus generate_planted(const PlantedSpec& spec) {
  if (spec.branching.empty()) throw ConfigError("planted: branching must be non-empty");
  for (int b : spec.branching)
    if (b < 1) throw ConfigError("planted: branching factors must be >= 1");
  if (spec.docs_per_leaf < 1) throw ConfigError("planted: docs_per_leaf must be >= 1");
  if (spec.train_shots < 0 || spec.train_shots > spec.docs_per_leaf)
    throw ConfigError("planted: train_shots must lie in [0, docs_per_leaf]");
  if (spec.doc_len < 1) throw ConfigError("planted: doc_len must be >= 1");
  if (spec.leaf_words < 1) throw ConfigError("planted: leaf_words must be >= 1");
  if (spec.shared_words < 1) throw ConfigError("planted: shared_words must be >= 1");
  if (spec.mix_leaf < 0 || spec.mix_parent < 0 || spec.mix_leaf + spec.mix_parent > 1.0)
    throw ConfigError("planted: token mixture rates must be nonnegative and sum to <= 1");
  for (const auto& mt : spec.meta_types) {
    if (mt.name.empty()) throw ConfigError("planted: empty metadata type name");
    if (mt.affinity < 0.0 || mt.affinity > 1.0)
      throw ConfigError("planted: metadata affinity must lie in [0, 1]");
    if (mt.pool_per_leaf < 1) throw ConfigError("planted: metadata pool_per_leaf must be >= 1");
    if (mt.per_doc < 0) throw ConfigError("planted: metadata per_doc must be >= 0");
    if (mt.missing_rate < 0.0 || mt.missing_rate > 1.0)
      throw ConfigError("planted: metadata missing_rate must lie in [0, 1]");
  }

  // Hierarchy: names are the child-index path under the root.
  struct Node {
    std::string name;
    int parent;
    std::vector<int> children;
  };
  std::vector<Node> nodes{{"root", -1, {}}};
  std::vector<int> frontier{0};
  for (std::size_t level = 0; level < spec.branching.size(); ++level) {
    std::vector<int> next;
    for (int p : frontier) {
      for (int c = 0; c < spec.branching[level]; ++c) {
        std::string name =
            nodes[p].parent < 0 ? "c" + std::to_string(c) : nodes[p].name + "_" + std::to_string(c);
        nodes.push_back({name, p, {}});
        int idx = static_cast<int>(nodes.size()) - 1;
        nodes[p].children.push_back(idx);
        next.push_back(idx);
      }
    }
    frontier = std::move(next);
  }
  const std::vector<int>& leaf_nodes = frontier;

  std::string taxonomy;
  for (std::size_t v = 0; v < nodes.size(); ++v)
    for (int c : nodes[v].children) taxonomy += nodes[v].name + "\t" + nodes[c].name + "\n";

  // Word pools. Leaf pools are disjoint by construction, so every leaf owns
  // leaf_words exclusive words.
  std::vector<std::string> shared;
  for (int i = 0; i < spec.shared_words; ++i) shared.push_back("common" + std::to_string(i));
  std::vector<std::vector<std::string>> node_pool(nodes.size());
  for (std::size_t v = 1; v < nodes.size(); ++v) {
    bool leaf = nodes[v].children.empty();
    int n_words = leaf ? spec.leaf_words : spec.parent_words;
    for (int i = 0; i < n_words; ++i)
      node_pool[v].push_back((leaf ? "leaf" : "mid") + std::to_string(v) + "w" + std::to_string(i));
  }

  // Metadata pools, per type per leaf.
  std::vector<std::vector<std::vector<std::string>>> meta_pool(spec.meta_types.size());
  std::vector<std::vector<std::string>> meta_universe(spec.meta_types.size());
  for (std::size_t t = 0; t < spec.meta_types.size(); ++t) {
    meta_pool[t].resize(leaf_nodes.size());
    for (std::size_t li = 0; li < leaf_nodes.size(); ++li)
      for (int i = 0; i < spec.meta_types[t].pool_per_leaf; ++i) {
        std::string inst =
            spec.meta_types[t].name + std::to_string(li) + "x" + std::to_string(i);
        meta_pool[t][li].push_back(inst);
        meta_universe[t].push_back(inst);
      }
  }

  std::mt19937_64 rng(mix_seed(spec.seed, 0x9E47));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto pick = [&](const std::vector<std::string>& pool) -> const std::string& {
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    return pool[d(rng)];
  };

  std::string corpus;
  for (std::size_t li = 0; li < leaf_nodes.size(); ++li) {
    int leaf = leaf_nodes[li];
    // non-root ancestors, nearest first
    std::vector<int> ancestors;
    for (int u = nodes[leaf].parent; u > 0; u = nodes[u].parent) ancestors.push_back(u);
    for (int d = 0; d < spec.docs_per_leaf; ++d) {
      std::string text;
      for (int t = 0; t < spec.doc_len; ++t) {
        double u = unif(rng);
        const std::string* w;
        if (u < spec.mix_leaf) {
          w = &pick(node_pool[leaf]);
        } else if (u < spec.mix_leaf + spec.mix_parent && !ancestors.empty()) {
          std::uniform_int_distribution<std::size_t> pa(0, ancestors.size() - 1);
          w = &pick(node_pool[ancestors[pa(rng)]]);
        } else {
          w = &pick(shared);
        }
        if (t) text += ' ';
        text += *w;
      }
      nlohmann::ordered_json j;
      j["id"] = nodes[leaf].name + "_d" + std::to_string(d);
      j["text"] = text;
      nlohmann::ordered_json meta = nlohmann::ordered_json::object();
      for (std::size_t t = 0; t < spec.meta_types.size(); ++t) {
        const MetaTypeSpec& mt = spec.meta_types[t];
        if (mt.per_doc == 0) continue;
        if (unif(rng) < mt.missing_rate) continue;
        auto& arr = meta[mt.name] = nlohmann::ordered_json::array();
        for (int k = 0; k < mt.per_doc; ++k) {
          bool own = unif(rng) < mt.affinity;
          arr.push_back(own ? pick(meta_pool[t][li]) : pick(meta_universe[t]));
        }
      }
      j["metadata"] = meta;
      j["label"] = nodes[leaf].name;
      j["split"] = d < spec.train_shots ? "train" : "test";
      corpus += j.dump() + "\n";
    }
  }
  return {std::move(taxonomy), std::move(corpus)};
}

// Writes the planted taxonomy and corpus to files.
inline void generate_planted_files(const PlantedSpec& spec, const std::string& taxonomy_path,
                                   const std::string& corpus_path) {
  PlantedCorpus pc = generate_planted(spec);
  std::ofstream tf(taxonomy_path, std::ios::binary);
  if (!tf) throw DataError("cannot write taxonomy file: " + taxonomy_path);
  tf << pc.taxonomy_text;
  if (!tf) throw DataError("short write to taxonomy file: " + taxonomy_path);
  std::ofstream cf(corpus_path, std::ios::binary);
  if (!cf) throw DataError("cannot write corpus file: " + corpus_path);
  cf << pc.corpus_jsonl;
  if (!cf) throw DataError("short write to corpus file: " + corpus_path);
}

}  // namespace spherecat
