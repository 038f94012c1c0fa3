#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "spherecat/augment.hpp"
#include "spherecat/cnn.hpp"
#include "spherecat/corpus.hpp"
#include "spherecat/embedding.hpp"
#include "spherecat/errors.hpp"
#include "spherecat/log.hpp"
#include "spherecat/taxonomy.hpp"
#include "spherecat/util.hpp"

namespace spherecat {

// Classifier owned by one internal node, discriminating among its children.
// A node with a single child routes deterministically and carries no network.
struct NodeClassifier {
  int node = -1;
  std::vector<int> classes;  // child node indices, hierarchy order
  bool passthrough = false;
  KimCnn net;

  Vec forward(std::span<const int> tokens) const {
    if (passthrough) return Vec{1.0};
    return net.forward(tokens);
  }
};

struct HierClassifier {
  std::vector<NodeClassifier> nodes;        // internal nodes, hierarchy index order
  std::unordered_map<int, int> by_node;     // hierarchy index -> position in nodes

  const NodeClassifier& at(int node) const {
    auto it = by_node.find(node);
    if (it == by_node.end())
      throw DataError("no classifier for hierarchy node index " + std::to_string(node));
    return nodes[it->second];
  }
};

// Training examples of one node: every real and synthetic document of each
// child class, labeled with the child's position.
inline std::vector<KimCnn::Example> node_training_examples(
    const LabelHierarchy& h, int node, const Corpus& corpus,
    const std::vector<std::vector<int>>& real,
    const std::vector<std::vector<std::vector<int>>>& synthetic) {
  std::vector<KimCnn::Example> examples;
  const auto& ch = h.children[node];
  for (std::size_t pos = 0; pos < ch.size(); ++pos) {
    int child = ch[pos];
    std::size_t before = examples.size();
    for (int d : real[child]) examples.push_back({corpus.docs[d].tokens, static_cast<int>(pos)});
    for (const auto& toks : synthetic[child]) examples.push_back({toks, static_cast<int>(pos)});
    if (examples.size() == before)
      throw DataError("no training documents for class " + h.ids[child] + " under node " +
                      h.ids[node]);
  }
  return examples;
}

// Trains the classifier of one internal node from the given class pools.
inline NodeClassifier train_node_classifier(const LabelHierarchy& h, int node, const Corpus& corpus,
                                            const std::vector<std::vector<int>>& real,
                                            const std::vector<std::vector<std::vector<int>>>& synthetic,
                                            const EmbeddingTable& table, const CnnConfig& cfg,
                                            std::uint64_t seed) {
  NodeClassifier nc;
  nc.node = node;
  nc.classes = h.children[node];
  if (nc.classes.empty()) throw DataError("train_node_classifier: " + h.ids[node] + " is a leaf");
  if (nc.classes.size() == 1) {
    nc.passthrough = true;
    return nc;
  }
  auto examples = node_training_examples(h, node, corpus, real, synthetic);
  nc.net = KimCnn(static_cast<int>(nc.classes.size()), table.count(EntityKind::Word), table.dim(),
                  cfg);
  nc.net.set_word_vectors(table);
  std::mt19937_64 rng(mix_seed(seed, 0xC100 + static_cast<std::uint64_t>(node)));
  auto res = nc.net.train(examples, rng);
  logging::debug("node " + h.ids[node] + ": " + std::to_string(examples.size()) + " examples, " +
                 std::to_string(res.epochs) + " epochs, train acc " +
                 std::to_string(res.train_accuracy));
  return nc;
}

// Trains every internal node. Nodes are independent (each takes its own seed
// derived from the shared one), so they may be trained by several workers;
// the result does not depend on the thread count.
inline HierClassifier train_hier_classifier(const LabelHierarchy& h, const Corpus& corpus,
                                            const std::vector<std::vector<std::vector<int>>>& synthetic,
                                            const EmbeddingTable& table, const CnnConfig& cfg,
                                            std::uint64_t seed, int threads = 1) {
  if (table.count(EntityKind::Word) == 0) throw DataError("classifier: empty vocabulary");
  auto real = propagate_real_train_docs(corpus, h);
  std::vector<int> internal;
  for (int v = 0; v < h.size(); ++v)
    if (!h.is_leaf(v)) internal.push_back(v);

  HierClassifier hc;
  hc.nodes.resize(internal.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (;;) {
      std::size_t k = next.fetch_add(1);
      if (k >= internal.size()) return;
      try {
        hc.nodes[k] =
            train_node_classifier(h, internal[k], corpus, real, synthetic, table, cfg, seed);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  int n_threads = std::clamp(threads, 1, static_cast<int>(internal.size()));
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  for (std::size_t k = 0; k < internal.size(); ++k) hc.by_node[internal[k]] = static_cast<int>(k);
  return hc;
}

// Top-down decoding: from the root, descend into the argmax child until a
// leaf. Returns the root-exclusive node path ending at the predicted leaf.
inline std::vector<int> predict_path(const HierClassifier& hc, const LabelHierarchy& h,
                                     std::span<const int> tokens) {
  std::vector<int> path;
  int cur = h.root;
  while (!h.is_leaf(cur)) {
    const NodeClassifier& nc = hc.at(cur);
    std::size_t pick = 0;
    if (!nc.passthrough) {
      Vec probs = nc.net.forward(tokens);
      pick = static_cast<std::size_t>(
          std::max_element(probs.begin(), probs.end()) - probs.begin());
    }
    cur = h.children[cur][pick];
    path.push_back(cur);
  }
  return path;
}

// ---------------------------------------------------------------------------
// Model bundle: a directory holding the embedding dump, one little-endian
// float32 weight file per non-passthrough node and a JSON manifest.
// ---------------------------------------------------------------------------

inline void save_bundle(const HierClassifier& hc, const LabelHierarchy& h,
                        const std::string& embeddings_path, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (!embeddings_path.empty()) {
    if (!fs::exists(embeddings_path))
      throw MissingInputError("embedding dump not found: " + embeddings_path);
    fs::copy_file(embeddings_path, fs::path(dir) / "embeddings.txt",
                  fs::copy_options::overwrite_existing);
  }
  nlohmann::ordered_json manifest;
  manifest["format"] = "spherecat-model/1";
  manifest["embeddings"] = "embeddings.txt";
  auto& nodes = manifest["nodes"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < hc.nodes.size(); ++k) {
    const NodeClassifier& nc = hc.nodes[k];
    nlohmann::ordered_json j;
    j["id"] = h.ids[nc.node];
    auto& cls = j["classes"] = nlohmann::ordered_json::array();
    for (int c : nc.classes) cls.push_back(h.ids[c]);
    j["passthrough"] = nc.passthrough;
    if (!nc.passthrough) {
      std::string fname = "node_" + std::to_string(k) + ".bin";
      j["file"] = fname;
      std::ofstream f(fs::path(dir) / fname, std::ios::binary);
      if (!f) throw DataError("cannot write model file: " + fname);
      nc.net.write(f);
      if (!f) throw DataError("short write to model file: " + fname);
    }
    nodes.push_back(std::move(j));
  }
  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!mf) throw DataError("cannot write model manifest");
  mf << manifest.dump(2) << '\n';
}

struct ModelBundle {
  HierClassifier hc;
  std::vector<std::string> words;  // row order of the private embedding layers
  std::unordered_map<std::string, int> word_index;
  int dim = 0;
};

inline ModelBundle load_bundle(const std::string& dir, const LabelHierarchy& h) {
  namespace fs = std::filesystem;
  fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf) throw MissingInputError("model manifest not found: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model manifest: bad JSON: ") + e.what());
  }
  if (manifest.value("format", "") != "spherecat-model/1")
    throw DataError("model manifest: unknown format");

  ModelBundle bundle;
  EmbeddingTable table =
      EmbeddingTable::load((fs::path(dir) / manifest.value("embeddings", "embeddings.txt")).string());
  bundle.words = table.ids(EntityKind::Word);
  for (std::size_t i = 0; i < bundle.words.size(); ++i)
    bundle.word_index[bundle.words[i]] = static_cast<int>(i);
  bundle.dim = table.dim();

  if (!manifest.contains("nodes") || !manifest["nodes"].is_array())
    throw DataError("model manifest: missing nodes array");
  for (const auto& j : manifest["nodes"]) {
    NodeClassifier nc;
    nc.node = h.require(j.value("id", ""));
    const auto& ch = h.children[nc.node];
    if (!j.contains("classes") || j["classes"].size() != ch.size())
      throw DataError("model manifest: class list of " + h.ids[nc.node] +
                      " does not match the taxonomy");
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (j["classes"][i].get<std::string>() != h.ids[ch[i]])
        throw DataError("model manifest: class order of " + h.ids[nc.node] +
                        " does not match the taxonomy");
      nc.classes.push_back(ch[i]);
    }
    nc.passthrough = j.value("passthrough", false);
    if (!nc.passthrough) {
      fs::path file = fs::path(dir) / j.value("file", "");
      std::ifstream f(file, std::ios::binary);
      if (!f) throw MissingInputError("model file not found: " + file.string());
      nc.net = KimCnn::read(f);
      if (nc.net.n_classes != static_cast<int>(ch.size()))
        throw DataError("model file of " + h.ids[nc.node] + ": class count mismatch");
    }
    bundle.hc.by_node[nc.node] = static_cast<int>(bundle.hc.nodes.size());
    bundle.hc.nodes.push_back(std::move(nc));
  }
  return bundle;
}

}  // namespace spherecat
