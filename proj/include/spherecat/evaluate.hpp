#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "spherecat/errors.hpp"
#include "spherecat/taxonomy.hpp"
#include "spherecat/util.hpp"

namespace spherecat {

enum class Scope { Leaf, Overall };
enum class Mode { Micro, Macro };

// Predicted root-exclusive paths and gold leaves, both keyed by document id.
using Predictions = std::map<std::string, std::vector<int>>;
using GoldLabels = std::map<std::string, int>;

namespace detail {

inline void validate_path(const LabelHierarchy& h, const std::string& doc,
                          const std::vector<int>& path) {
  if (path.empty()) throw DataError("evaluate: empty predicted path for " + doc);
  int prev = h.root;
  for (int v : path) {
    if (v < 0 || v >= h.size() || h.parent[v] != prev)
      throw DataError("evaluate: predicted path of " + doc + " is not a root path");
    prev = v;
  }
  if (!h.is_leaf(path.back()))
    throw DataError("evaluate: predicted path of " + doc + " does not end at a leaf");
}

struct Counts {
  long long tp = 0, fp = 0, fn = 0;
};

// Per-class confusion counts under a scope. Leaf scope compares the two
// leaves; overall scope compares the expanded root-exclusive paths over all
// non-root categories.
inline std::vector<Counts> count_confusions(const Predictions& preds, const GoldLabels& gold,
                                            const LabelHierarchy& h, Scope scope) {
  if (preds.size() != gold.size())
    throw DataError("evaluate: predictions and gold label key sets differ in size");
  std::vector<Counts> counts(h.size());
  std::vector<char> in_pred(h.size(), 0);
  for (const auto& [doc, path] : preds) {
    auto git = gold.find(doc);
    if (git == gold.end()) throw DataError("evaluate: no gold label for document " + doc);
    validate_path(h, doc, path);
    int gold_leaf = git->second;
    if (gold_leaf < 0 || gold_leaf >= h.size() || !h.is_leaf(gold_leaf))
      throw DataError("evaluate: gold label of " + doc + " is not a leaf");

    std::vector<int> p_set, g_set;
    if (scope == Scope::Leaf) {
      p_set = {path.back()};
      g_set = {gold_leaf};
    } else {
      p_set = path;
      for (int v : path_to_root(h, gold_leaf))
        if (v != h.root) g_set.push_back(v);
    }
    for (int v : p_set) in_pred[v] = 1;
    for (int v : g_set) {
      if (in_pred[v])
        ++counts[v].tp;
      else
        ++counts[v].fn;
    }
    for (int v : p_set) {
      bool matched = std::find(g_set.begin(), g_set.end(), v) != g_set.end();
      if (!matched) ++counts[v].fp;
      in_pred[v] = 0;
    }
  }
  return counts;
}

inline double f1_of(long long tp, long long fp, long long fn) {
  double denom = 2.0 * tp + fp + fn;
  if (denom == 0.0) return 0.0;
  return 2.0 * tp / denom;
}

}  // namespace detail

// The classes a scope ranges over: leaves only, or everything but the root.
inline std::vector<int> scope_classes(const LabelHierarchy& h, Scope scope) {
  std::vector<int> out;
  for (int v = 0; v < h.size(); ++v) {
    if (v == h.root) continue;
    if (scope == Scope::Leaf && !h.is_leaf(v)) continue;
    out.push_back(v);
  }
  return out;
}

// Micro mode pools counts over the scope's classes; macro mode averages
// per-class F1 over the classes with nonzero gold support. A per-class F1
// with zero denominator counts as 0.
inline double compute_f1(const Predictions& preds, const GoldLabels& gold,
                         const LabelHierarchy& h, Scope scope, Mode mode) {
  auto counts = detail::count_confusions(preds, gold, h, scope);
  if (mode == Mode::Micro) {
    long long tp = 0, fp = 0, fn = 0;
    for (int v : scope_classes(h, scope)) {
      tp += counts[v].tp;
      fp += counts[v].fp;
      fn += counts[v].fn;
    }
    return detail::f1_of(tp, fp, fn);
  }
  double sum = 0.0;
  long long supported = 0;
  for (int v : scope_classes(h, scope)) {
    if (counts[v].tp + counts[v].fn == 0) continue;
    sum += detail::f1_of(counts[v].tp, counts[v].fp, counts[v].fn);
    ++supported;
  }
  return supported == 0 ? 0.0 : sum / static_cast<double>(supported);
}

struct ClassScore {
  std::string label;
  bool leaf = false;
  long long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct EvalReport {
  double leaf_micro = 0.0, leaf_macro = 0.0;
  double overall_micro = 0.0, overall_macro = 0.0;
  std::size_t documents = 0;
  std::vector<ClassScore> per_class;  // overall-scope counts, node index order
};

inline EvalReport evaluate_predictions(const Predictions& preds, const GoldLabels& gold,
                                       const LabelHierarchy& h) {
  EvalReport r;
  r.documents = preds.size();
  r.leaf_micro = compute_f1(preds, gold, h, Scope::Leaf, Mode::Micro);
  r.leaf_macro = compute_f1(preds, gold, h, Scope::Leaf, Mode::Macro);
  r.overall_micro = compute_f1(preds, gold, h, Scope::Overall, Mode::Micro);
  r.overall_macro = compute_f1(preds, gold, h, Scope::Overall, Mode::Macro);
  auto counts = detail::count_confusions(preds, gold, h, Scope::Overall);
  for (int v : scope_classes(h, Scope::Overall)) {
    ClassScore s;
    s.label = h.ids[v];
    s.leaf = h.is_leaf(v);
    s.tp = counts[v].tp;
    s.fp = counts[v].fp;
    s.fn = counts[v].fn;
    s.precision = s.tp + s.fp == 0 ? 0.0 : static_cast<double>(s.tp) / (s.tp + s.fp);
    s.recall = s.tp + s.fn == 0 ? 0.0 : static_cast<double>(s.tp) / (s.tp + s.fn);
    s.f1 = detail::f1_of(s.tp, s.fp, s.fn);
    r.per_class.push_back(std::move(s));
  }
  return r;
}

inline std::string report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["documents"] = r.documents;
  j["leaf_micro_f1"] = r.leaf_micro;
  j["leaf_macro_f1"] = r.leaf_macro;
  j["overall_micro_f1"] = r.overall_micro;
  j["overall_macro_f1"] = r.overall_macro;
  auto& classes = j["classes"] = nlohmann::ordered_json::array();
  for (const auto& s : r.per_class) {
    nlohmann::ordered_json c;
    c["label"] = s.label;
    c["leaf"] = s.leaf;
    c["tp"] = s.tp;
    c["fp"] = s.fp;
    c["fn"] = s.fn;
    c["precision"] = s.precision;
    c["recall"] = s.recall;
    c["f1"] = s.f1;
    classes.push_back(std::move(c));
  }
  return j.dump(2) + "\n";
}

inline std::string report_table(const EvalReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "documents evaluated: %zu\n", r.documents);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-16s %8s %8s\n", "scope", "micro", "macro");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-16s %8.4f %8.4f\n", "leaf", r.leaf_micro, r.leaf_macro);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-16s %8.4f %8.4f\n\n", "overall", r.overall_micro,
                r.overall_macro);
  out += buf;
  std::size_t width = 5;
  for (const auto& s : r.per_class) width = std::max(width, s.label.size());
  std::snprintf(buf, sizeof(buf), "%-*s %6s %6s %6s %9s %9s %9s\n", static_cast<int>(width),
                "class", "tp", "fp", "fn", "precision", "recall", "f1");
  out += buf;
  for (const auto& s : r.per_class) {
    std::snprintf(buf, sizeof(buf), "%-*s %6lld %6lld %6lld %9.4f %9.4f %9.4f\n",
                  static_cast<int>(width), s.label.c_str(), s.tp, s.fp, s.fn, s.precision,
                  s.recall, s.f1);
    out += buf;
  }
  return out;
}

}  // namespace spherecat
