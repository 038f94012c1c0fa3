#pragma once

// Shared test utilities: independent oracles (finite differences, set-based
// F1, root-path counting, chi-square), tiny corpus builders and process
// helpers. Oracles are deliberately written against the math, not against
// the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "spherecat/augment.hpp"
#include "spherecat/corpus.hpp"
#include "spherecat/synthgen.hpp"
#include "spherecat/taxonomy.hpp"

namespace testutil {

// --------------------------------------------------------------------------
// Filesystem helpers
// --------------------------------------------------------------------------

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "spherecat-test-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path = buf.data();
  }
  ~TempDir() {
    if (path.empty()) return;
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  TempDir(TempDir&& other) noexcept { std::swap(path, other.path); }
  TempDir& operator=(TempDir&& other) noexcept {
    std::swap(path, other.path);
    return *this;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  f << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// --------------------------------------------------------------------------
// Numeric oracles
// --------------------------------------------------------------------------

// Central finite differences of a scalar function over a flat parameter
// vector.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double orig = x[i];
    x[i] = orig + h;
    double up = f(x);
    x[i] = orig - h;
    double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double rel_err(double got, double want) {
  double denom = std::max({std::fabs(got), std::fabs(want), 1e-12});
  return std::fabs(got - want) / denom;
}

inline double max_grad_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  double scale = 1e-8;
  for (double w : want) scale = std::max(scale, std::fabs(w));
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i)
    worst = std::max(worst, std::fabs(got[i] - want[i]) / scale);
  return worst;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline double angle_deg(const std::vector<double>& a, const std::vector<double>& b) {
  double c = dot(a, b) / (norm(a) * norm(b));
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

// --------------------------------------------------------------------------
// Set-based F1 oracle: expand each document to (doc, class) pairs and count
// the pair sets directly. Independent of the production counting path.
// --------------------------------------------------------------------------

using ClassSets = std::map<std::string, std::set<std::string>>;

inline double oracle_micro_f1(const ClassSets& pred, const ClassSets& gold) {
  long long tp = 0, fp = 0, fn = 0;
  for (const auto& [doc, pset] : pred) {
    const auto& gset = gold.at(doc);
    for (const auto& c : pset) (gset.count(c) ? tp : fp) += 1;
    for (const auto& c : gset)
      if (!pset.count(c)) ++fn;
  }
  long long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * tp / denom;
}

// `classes` fixes the summation order so results are bit-comparable.
inline double oracle_macro_f1(const ClassSets& pred, const ClassSets& gold,
                              const std::vector<std::string>& classes) {
  double sum = 0.0;
  int supported = 0;
  for (const auto& c : classes) {
    long long tp = 0, fp = 0, fn = 0;
    for (const auto& [doc, pset] : pred) {
      bool in_pred = pset.count(c) > 0;
      bool in_gold = gold.at(doc).count(c) > 0;
      if (in_pred && in_gold) ++tp;
      else if (in_pred) ++fp;
      else if (in_gold) ++fn;
    }
    if (tp + fn == 0) continue;
    long long denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * tp / denom;
    ++supported;
  }
  return supported == 0 ? 0.0 : sum / supported;
}

// --------------------------------------------------------------------------
// Root-path counting oracle for DAG-to-tree duplication: enumerate distinct
// root-to-node paths by depth-first traversal of the raw edge list.
// --------------------------------------------------------------------------

inline std::map<std::string, long long> count_root_paths(
    const std::vector<std::pair<std::string, std::string>>& edges) {
  std::map<std::string, std::vector<std::string>> adj;
  std::set<std::string> children, all;
  for (const auto& [p, c] : edges) {
    auto& kids = adj[p];
    if (std::find(kids.begin(), kids.end(), c) == kids.end()) kids.push_back(c);
    children.insert(c);
    all.insert(p);
    all.insert(c);
  }
  std::string root;
  for (const auto& n : all)
    if (!children.count(n)) root = n;
  std::map<std::string, long long> paths;
  std::function<void(const std::string&)> dfs = [&](const std::string& v) {
    paths[v] += 1;
    for (const auto& c : adj[v]) dfs(c);
  };
  dfs(root);
  return paths;
}

// --------------------------------------------------------------------------
// Chi-square independence test between two categorical variables given a
// contingency table; critical value via the Wilson-Hilferty approximation.
// --------------------------------------------------------------------------

inline double chi2_statistic(const std::vector<std::vector<long long>>& table) {
  std::size_t rows = table.size(), cols = table[0].size();
  std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      row_sum[r] += table[r][c];
      col_sum[c] += table[r][c];
      total += table[r][c];
    }
  double stat = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double expected = row_sum[r] * col_sum[c] / total;
      if (expected <= 0.0) continue;
      double diff = table[r][c] - expected;
      stat += diff * diff / expected;
    }
  return stat;
}

// Upper-tail critical value chi2_alpha(df) ~ df * (1 - 2/(9 df) + z sqrt(2/(9 df)))^3.
inline double chi2_critical(int df, double z_upper) {
  double d = df;
  double term = 1.0 - 2.0 / (9.0 * d) + z_upper * std::sqrt(2.0 / (9.0 * d));
  return d * term * term * term;
}

constexpr double kZ99 = 2.3263478740408408;  // upper 1% of the standard normal

// --------------------------------------------------------------------------
// Nearest-centroid bag-of-words baseline: per-leaf mean count vector from
// train docs, cosine assignment of test docs. A floor for planted signal.
// --------------------------------------------------------------------------

inline double nearest_centroid_accuracy(const spherecat::Corpus& corpus,
                                        const spherecat::LabelHierarchy& h) {
  auto leaves = h.leaves();
  std::map<int, int> leaf_slot;
  for (std::size_t i = 0; i < leaves.size(); ++i) leaf_slot[leaves[i]] = static_cast<int>(i);
  std::size_t v = corpus.vocab.words.size();
  std::vector<std::vector<double>> centroid(leaves.size(), std::vector<double>(v, 0.0));
  std::vector<int> count(leaves.size(), 0);
  for (const auto& d : corpus.docs) {
    if (!d.train || d.gold_label < 0) continue;
    int slot = leaf_slot.at(d.gold_label);
    for (int t : d.tokens) centroid[slot][static_cast<std::size_t>(t)] += 1.0;
    ++count[slot];
  }
  for (std::size_t i = 0; i < leaves.size(); ++i)
    if (count[i] > 0)
      for (auto& x : centroid[i]) x /= count[i];
  long long hit = 0, total = 0;
  for (const auto& d : corpus.docs) {
    if (d.train || d.gold_label < 0) continue;
    std::vector<double> bow(v, 0.0);
    for (int t : d.tokens) bow[static_cast<std::size_t>(t)] += 1.0;
    double best = -2.0;
    int best_slot = 0;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      double denom = norm(bow) * norm(centroid[i]);
      double cos = denom == 0.0 ? 0.0 : dot(bow, centroid[i]) / denom;
      if (cos > best) {
        best = cos;
        best_slot = static_cast<int>(i);
      }
    }
    if (leaves[static_cast<std::size_t>(best_slot)] == d.gold_label) ++hit;
    ++total;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / total;
}

// --------------------------------------------------------------------------
// Planted corpus shortcut: generate with synthgen into a temp dir and load.
// --------------------------------------------------------------------------

struct PlantedData {
  TempDir dir;
  spherecat::LabelHierarchy h;
  spherecat::Corpus corpus;
};

inline PlantedData make_planted(const spherecat::PlantedSpec& spec) {
  PlantedData out;
  std::string tax = out.dir.file("taxonomy.txt");
  std::string cor = out.dir.file("corpus.jsonl");
  spherecat::generate_planted_files(spec, tax, cor);
  out.h = spherecat::load_taxonomy(tax);
  out.corpus = spherecat::load_corpus(cor, out.h);
  return out;
}

// Per-node synthetic token lists in the shape the classifier trainer takes.
inline std::vector<std::vector<std::vector<int>>> token_pools(const spherecat::AugmentedSet& set) {
  std::vector<std::vector<std::vector<int>>> pools(set.synthetic.size());
  for (std::size_t v = 0; v < set.synthetic.size(); ++v)
    for (int k : set.synthetic[v]) pools[v].push_back(set.arena[static_cast<std::size_t>(k)].tokens);
  return pools;
}

// --------------------------------------------------------------------------
// CLI process helper
// --------------------------------------------------------------------------

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr interleaved
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') q += "'\\''";
    else q += c;
  }
  return q + "'";
}

inline CliResult run_cli(const std::string& binary, const std::vector<std::string>& args,
                         const std::string& capture_path) {
  std::string cmd = shell_quote(binary);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " > " + shell_quote(capture_path) + " 2>&1";
  int rc = std::system(cmd.c_str());
  CliResult r;
  if (rc == -1) return r;
  if (WIFEXITED(rc)) r.exit_code = WEXITSTATUS(rc);
  r.output = read_file(capture_path);
  return r;
}

}  // namespace testutil
