#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "spherecat/errors.hpp"
#include "spherecat/log.hpp"
#include "spherecat/taxonomy.hpp"

namespace spherecat {

// Lowercases ASCII letters and splits on whitespace and punctuation: a token
// is a maximal run of bytes that are neither ASCII whitespace nor ASCII
// punctuation. Multi-byte UTF-8 sequences pass through untouched.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    bool sep = c < 0x80 && (std::isspace(c) || std::ispunct(c));
    if (sep) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct Vocabulary {
  std::vector<std::string> words;  // WordId -> surface form
  std::vector<long long> freq;     // WordId -> corpus frequency
  std::unordered_map<std::string, int> index;
  int min_count = 1;

  int size() const { return static_cast<int>(words.size()); }
  int id(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? -1 : it->second;
  }
};

// Metadata instances are namespaced by their type, e.g. "user:alice", so the
// same raw name under two types stays two distinct instances.
struct MetaRegistry {
  std::vector<std::string> ids;    // MetaId -> "type:name"
  std::vector<std::string> types;  // MetaId -> type
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(ids.size()); }
  int intern(const std::string& type, const std::string& name) {
    std::string key = type + ":" + name;
    auto [it, fresh] = index.try_emplace(key, static_cast<int>(ids.size()));
    if (fresh) {
      ids.push_back(key);
      types.push_back(type);
    }
    return it->second;
  }
  int id(const std::string& key) const {
    auto it = index.find(key);
    return it == index.end() ? -1 : it->second;
  }
};

struct Document {
  std::string id;
  std::vector<int> tokens;    // WordIds, in text order, vocabulary-filtered
  std::vector<int> metadata;  // MetaIds, de-duplicated, first-appearance order
  int gold_label = -1;        // leaf node index, -1 when unlabeled
  bool train = false;
};

struct Corpus {
  std::vector<Document> docs;
  Vocabulary vocab;
  MetaRegistry meta;
  std::unordered_map<std::string, int> doc_index;  // id -> position

  int size() const { return static_cast<int>(docs.size()); }
};

namespace detail {

struct RawRecord {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::pair<std::string, std::string>> metadata;  // (type, name)
  std::optional<std::string> label;
  bool train = false;
};

inline RawRecord parse_record(const std::string& line, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corpus: line " + std::to_string(lineno) + ": bad JSON: " + e.what());
  }
  auto fail = [&](const std::string& what) -> DataError {
    return DataError("corpus: line " + std::to_string(lineno) + ": " + what);
  };
  if (!j.is_object()) throw fail("record is not an object");
  RawRecord r;
  if (!j.contains("id") || !j["id"].is_string()) throw fail("missing string field 'id'");
  r.id = j["id"].get<std::string>();
  if (r.id.empty()) throw fail("empty document id");
  if (!j.contains("text") || !j["text"].is_string()) throw fail("missing string field 'text'");
  r.tokens = tokenize(j["text"].get<std::string>());
  if (!j.contains("split") || !j["split"].is_string()) throw fail("missing string field 'split'");
  std::string split = j["split"].get<std::string>();
  if (split != "train" && split != "test") throw fail("split must be 'train' or 'test'");
  r.train = split == "train";
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_string()) throw fail("label must be a string or null");
    r.label = j["label"].get<std::string>();
  }
  if (j.contains("metadata") && !j["metadata"].is_null()) {
    if (!j["metadata"].is_object()) throw fail("metadata must be an object");
    for (auto& [type, arr] : j["metadata"].items()) {
      if (type.empty()) throw fail("empty metadata type");
      if (!arr.is_array()) throw fail("metadata values must be arrays");
      for (auto& v : arr) {
        if (!v.is_string()) throw fail("metadata instance must be a string");
        r.metadata.emplace_back(type, v.get<std::string>());
      }
    }
  }
  return r;
}

}  // namespace detail

// Reads a JSONL corpus against a hierarchy. Builds the vocabulary over all
// documents in first-appearance order, keeping words with frequency >=
// min_count and dropping the rest from every token stream. A labeled record
// whose label names a node duplicated during DAG conversion is replicated
// once per duplicate with "#<k>" id suffixes, so each copy carries a single
// leaf. Test labels are kept for scoring but never read by training code.
inline Corpus load_corpus(const std::string& path, const LabelHierarchy& h, int min_count = 1) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::ifstream f(path);
  if (!f) throw MissingInputError("corpus file not found: " + path);

  std::vector<detail::RawRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    records.push_back(detail::parse_record(line, lineno));
  }
  if (records.empty()) throw DataError("corpus: no records in " + path);

  Corpus c;
  c.vocab.min_count = min_count;
  std::unordered_map<std::string, long long> counts;
  for (const auto& r : records)
    for (const auto& w : r.tokens) ++counts[w];
  for (const auto& r : records)
    for (const auto& w : r.tokens) {
      auto it = counts.find(w);
      if (it->second < min_count) continue;
      if (c.vocab.index.try_emplace(w, c.vocab.size()).second) {
        c.vocab.words.push_back(w);
        c.vocab.freq.push_back(it->second);
      }
    }

  for (const auto& r : records) {
    Document d;
    d.id = r.id;
    d.train = r.train;
    d.tokens.reserve(r.tokens.size());
    for (const auto& w : r.tokens) {
      int id = c.vocab.id(w);
      if (id >= 0) d.tokens.push_back(id);
    }
    std::unordered_set<int> seen;
    for (const auto& [type, name] : r.metadata) {
      int m = c.meta.intern(type, name);
      if (seen.insert(m).second) d.metadata.push_back(m);
    }
    std::vector<int> targets;
    if (r.label.has_value()) {
      targets = h.resolve(*r.label);
      if (targets.empty()) throw DataError("corpus: document " + r.id + ": unknown label " + *r.label);
      for (int t : targets)
        if (!h.is_leaf(t))
          throw DataError("corpus: document " + r.id + ": label " + *r.label + " is not a leaf");
    } else if (r.train) {
      throw DataError("corpus: document " + r.id + ": train documents must carry a leaf label");
    }

    auto push = [&](Document doc) {
      if (!c.doc_index.try_emplace(doc.id, c.size()).second)
        throw DataError("corpus: duplicate document id: " + doc.id);
      c.docs.push_back(std::move(doc));
    };
    if (targets.size() <= 1) {
      if (!targets.empty()) d.gold_label = targets[0];
      push(std::move(d));
    } else {
      // Multi-parent DAG label: attach the document to every duplicate.
      for (std::size_t k = 0; k < targets.size(); ++k) {
        Document copy = d;
        copy.id = d.id + "#" + std::to_string(k);
        copy.gold_label = targets[k];
        push(std::move(copy));
      }
    }
  }
  return c;
}

// Writes a corpus back to JSONL. Token streams are emitted as space-joined
// surface forms; reloading with min_count=1 reproduces the documents.
inline void save_corpus(const Corpus& c, const LabelHierarchy& h, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write corpus file: " + path);
  for (const auto& d : c.docs) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    std::string text;
    for (std::size_t i = 0; i < d.tokens.size(); ++i) {
      if (i) text += ' ';
      text += c.vocab.words[d.tokens[i]];
    }
    j["text"] = text;
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    for (int m : d.metadata) {
      const std::string& type = c.meta.types[m];
      meta[type].push_back(c.meta.ids[m].substr(type.size() + 1));
    }
    j["metadata"] = meta;
    if (d.gold_label >= 0)
      j["label"] = h.ids[d.gold_label];
    else
      j["label"] = nullptr;
    j["split"] = d.train ? "train" : "test";
    f << j.dump() << '\n';
  }
  if (!f) throw DataError("short write to corpus file: " + path);
}

// Number of labeled train documents per leaf; logs a warning when leaves are
// unevenly covered (the intended regime is a fixed shot count per leaf).
inline std::unordered_map<int, int> train_shots_per_leaf(const Corpus& c, const LabelHierarchy& h) {
  std::unordered_map<int, int> shots;
  for (int v : h.leaves()) shots[v] = 0;
  for (const auto& d : c.docs)
    if (d.train && d.gold_label >= 0) ++shots[d.gold_label];
  int lo = -1, hi = -1;
  for (auto& [v, k] : shots) {
    lo = lo < 0 ? k : std::min(lo, k);
    hi = hi < 0 ? k : std::max(hi, k);
  }
  if (lo != hi)
    logging::warning("train documents unevenly distributed over leaves (min " +
                     std::to_string(lo) + ", max " + std::to_string(hi) + ")");
  return shots;
}

}  // namespace spherecat
