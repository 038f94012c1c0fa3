#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <fstream>
#include <istream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spherecat/errors.hpp"
#include "spherecat/util.hpp"

namespace spherecat {

using EdgeList = std::vector<std::pair<std::string, std::string>>;

// Rooted category tree. Nodes are dense indices. `ids` holds the unique
// identifier of each node and `names` the original label name; the two differ
// only for nodes that were duplicated while converting a DAG, whose ids are
// the slash-joined name path below the root.
struct LabelHierarchy {
  std::vector<std::string> ids;
  std::vector<std::string> names;
  std::vector<int> parent;                 // -1 for the root
  std::vector<std::vector<int>> children;  // input edge order
  int root = -1;
  std::unordered_map<std::string, int> index;                 // id -> node
  std::unordered_map<std::string, std::vector<int>> by_name;  // name -> duplicates

  int size() const { return static_cast<int>(ids.size()); }
  bool is_leaf(int v) const { return children[v].empty(); }

  int find(const std::string& id) const {
    auto it = index.find(id);
    return it == index.end() ? -1 : it->second;
  }

  int require(const std::string& id) const {
    int v = find(id);
    if (v < 0) throw DataError("unknown label: " + id);
    return v;
  }

  // All nodes matching a label string: an exact id match wins, otherwise all
  // duplicates carrying that original name.
  std::vector<int> resolve(const std::string& label) const {
    int v = find(label);
    if (v >= 0) return {v};
    auto it = by_name.find(label);
    if (it == by_name.end()) return {};
    return it->second;
  }

  std::vector<int> leaves() const {
    std::vector<int> out;
    for (int v = 0; v < size(); ++v)
      if (is_leaf(v)) out.push_back(v);
    return out;
  }

  int depth(int v) const {
    int d = 0;
    while (parent[v] >= 0) {
      v = parent[v];
      ++d;
    }
    return d;
  }
};

// Converts a rooted DAG given as (parent, child) name pairs into a tree by
// duplicating every multi-parent node once per distinct root path. A tree
// comes back unchanged. Validation errors (cycles, several roots, unreachable
// nodes, malformed names) throw DataError.
inline LabelHierarchy dag_to_tree(const EdgeList& edges) {
  if (edges.empty()) throw DataError("taxonomy: empty edge list");

  std::vector<std::string> names;
  std::unordered_map<std::string, int> id_of;
  auto intern = [&](const std::string& s) {
    if (s.empty()) throw DataError("taxonomy: empty label name");
    auto [it, fresh] = id_of.try_emplace(s, static_cast<int>(names.size()));
    if (fresh) names.push_back(s);
    return it->second;
  };

  std::vector<std::vector<int>> out_edges;
  std::vector<int> indegree;
  for (const auto& [p, c] : edges) {
    int u = intern(p);
    int v = intern(c);
    out_edges.resize(names.size());
    indegree.resize(names.size(), 0);
    if (u == v) throw DataError("taxonomy: self loop at " + p);
    auto& ch = out_edges[u];
    if (std::find(ch.begin(), ch.end(), v) != ch.end()) continue;  // duplicate edge
    ch.push_back(v);
    ++indegree[v];
  }
  const int n = static_cast<int>(names.size());
  out_edges.resize(n);
  indegree.resize(n, 0);

  std::vector<int> roots;
  for (int v = 0; v < n; ++v)
    if (indegree[v] == 0) roots.push_back(v);
  if (roots.empty()) throw DataError("taxonomy: cycle detected, no root node");
  if (roots.size() > 1) {
    std::string msg = "taxonomy: multiple roots:";
    for (int r : roots) msg += " " + names[r];
    throw DataError(msg);
  }
  const int root = roots[0];

  // Kahn topological pass doubles as cycle detection and root-path counting.
  // With a single zero-indegree node, anything the pass never reaches sits on
  // or behind a cycle, so "unreachable from root" is reported as such.
  std::vector<int> indeg(indegree);
  std::vector<long long> paths(n, 0);
  paths[root] = 1;
  std::deque<int> queue{root};
  int processed = 0;
  long long total_paths = 0;
  const long long kMaxNodes = 1000000;
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    ++processed;
    total_paths += paths[u];
    if (total_paths > kMaxNodes)
      throw DataError("taxonomy: DAG expands to more than 1000000 tree nodes");
    for (int v : out_edges[u]) {
      paths[v] += paths[u];
      if (--indeg[v] == 0) queue.push_back(v);
    }
  }
  if (processed < n) {
    std::string msg = "taxonomy: cycle detected, unreachable from root:";
    for (int v = 0; v < n; ++v)
      if (paths[v] == 0 && v != root) msg += " " + names[v];
    throw DataError(msg);
  }

  // Expand paths depth-first, honoring input child order. Each stack entry is
  // a pending tree node together with its name-graph node.
  LabelHierarchy h;
  h.ids.reserve(static_cast<std::size_t>(total_paths));
  struct Frame {
    int name_node;
    int tree_parent;  // index in h, -1 for root
  };
  std::vector<Frame> stack{{root, -1}};
  std::vector<std::string> below_root;  // per tree node: name path below root
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    int v = static_cast<int>(h.ids.size());
    const std::string& nm = names[f.name_node];
    std::string path =
        f.tree_parent < 0 ? std::string()
                          : (below_root[f.tree_parent].empty() ? nm
                                                               : below_root[f.tree_parent] + "/" + nm);
    std::string id = (paths[f.name_node] > 1) ? path : nm;
    if (!h.index.try_emplace(id, v).second)
      throw DataError("taxonomy: identifier collision after DAG conversion: " + id);
    h.ids.push_back(id);
    h.names.push_back(nm);
    h.parent.push_back(f.tree_parent);
    h.children.emplace_back();
    h.by_name[nm].push_back(v);
    below_root.push_back(path);
    if (f.tree_parent >= 0) h.children[f.tree_parent].push_back(v);

    const auto& ch = out_edges[f.name_node];
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back({*it, v});
  }
  h.root = 0;
  return h;
}

// Parses (parent, child) name pairs into a validated tree. DAG inputs are
// converted, tree inputs come back as-is.
inline LabelHierarchy parse_taxonomy(const EdgeList& edges) { return dag_to_tree(edges); }

// Children strictly before parents; leaves first, root last. Within one
// node's subtree the order is a post-order walk honoring child order.
inline std::vector<int> bottom_up_order(const LabelHierarchy& h) {
  std::vector<int> out;
  out.reserve(h.size());
  std::vector<std::pair<int, std::size_t>> stack{{h.root, 0}};
  while (!stack.empty()) {
    auto& [v, cursor] = stack.back();
    if (cursor < h.children[v].size()) {
      int c = h.children[v][cursor++];
      stack.emplace_back(c, 0);
    } else {
      out.push_back(v);
      stack.pop_back();
    }
  }
  return out;
}

// [v, parent(v), ..., root]
inline std::vector<int> path_to_root(const LabelHierarchy& h, int v) {
  if (v < 0 || v >= h.size()) throw DataError("path_to_root: node out of range");
  std::vector<int> out;
  for (int u = v; u >= 0; u = h.parent[u]) out.push_back(u);
  return out;
}

// Taxonomy files are UTF-8 text, one "parent<TAB>child" pair per line.
// Blank lines and lines starting with '#' are skipped.
inline EdgeList read_taxonomy_edges(std::istream& in) {
  EdgeList edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("taxonomy: line " + std::to_string(lineno) + ": expected parent<TAB>child");
    std::string p = trim(line.substr(0, tab));
    std::string c = trim(line.substr(tab + 1));
    if (p.empty() || c.empty())
      throw DataError("taxonomy: line " + std::to_string(lineno) + ": empty label name");
    edges.emplace_back(std::move(p), std::move(c));
  }
  return edges;
}

inline LabelHierarchy load_taxonomy(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingInputError("taxonomy file not found: " + path);
  return parse_taxonomy(read_taxonomy_edges(f));
}

inline void save_taxonomy(const LabelHierarchy& h, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write taxonomy file: " + path);
  for (int v = 0; v < h.size(); ++v)
    for (int c : h.children[v]) f << h.ids[v] << '\t' << h.ids[c] << '\n';
  if (!f) throw DataError("short write to taxonomy file: " + path);
}

}  // namespace spherecat
