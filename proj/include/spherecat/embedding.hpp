#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "spherecat/errors.hpp"
#include "spherecat/sphere.hpp"
#include "spherecat/util.hpp"

namespace spherecat {

enum class EntityKind : std::uint8_t { Label = 0, Meta = 1, Doc = 2, Word = 3 };

inline const char* kind_name(EntityKind k) {
  static const char* names[] = {"label", "meta", "doc", "word"};
  return names[static_cast<int>(k)];
}

struct EntityRef {
  EntityKind kind;
  int idx;
  bool operator==(const EntityRef&) const = default;
};

// One unit vector per label, metadata instance, document and word, stored as
// four flat row-major blocks. Rows stay unit-norm through every public
// operation; loading validates that to 1e-6.
class EmbeddingTable {
 public:
  EmbeddingTable(int dim, std::vector<std::string> label_ids, std::vector<std::string> meta_ids,
                 std::vector<std::string> doc_ids, std::vector<std::string> word_ids)
      : dim_(dim) {
    if (dim < 2) throw ConfigError("embedding dim must be >= 2");
    ids_[0] = std::move(label_ids);
    ids_[1] = std::move(meta_ids);
    ids_[2] = std::move(doc_ids);
    ids_[3] = std::move(word_ids);
    for (int k = 0; k < 4; ++k) {
      data_[k].assign(ids_[k].size() * static_cast<std::size_t>(dim_), 0.0);
      index_[k].reserve(ids_[k].size());
      for (std::size_t i = 0; i < ids_[k].size(); ++i)
        if (!index_[k].try_emplace(ids_[k][i], static_cast<int>(i)).second)
          throw DataError(std::string("duplicate ") + kind_name(static_cast<EntityKind>(k)) +
                          " id: " + ids_[k][i]);
    }
  }

  int dim() const { return dim_; }
  int count(EntityKind k) const { return static_cast<int>(ids_[static_cast<int>(k)].size()); }
  const std::vector<std::string>& ids(EntityKind k) const { return ids_[static_cast<int>(k)]; }

  const std::string& id_of(EntityRef r) const { return ids_[static_cast<int>(r.kind)][r.idx]; }

  int find(EntityKind k, const std::string& id) const {
    const auto& m = index_[static_cast<int>(k)];
    auto it = m.find(id);
    return it == m.end() ? -1 : it->second;
  }

  std::span<double> vec(EntityRef r) {
    auto& block = data_[static_cast<int>(r.kind)];
    return {block.data() + static_cast<std::size_t>(r.idx) * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<const double> vec(EntityRef r) const {
    const auto& block = data_[static_cast<int>(r.kind)];
    return {block.data() + static_cast<std::size_t>(r.idx) * dim_, static_cast<std::size_t>(dim_)};
  }

  std::span<double> label(int i) { return vec({EntityKind::Label, i}); }
  std::span<double> meta(int i) { return vec({EntityKind::Meta, i}); }
  std::span<double> doc(int i) { return vec({EntityKind::Doc, i}); }
  std::span<double> word(int i) { return vec({EntityKind::Word, i}); }
  std::span<const double> label(int i) const { return vec({EntityKind::Label, i}); }
  std::span<const double> meta(int i) const { return vec({EntityKind::Meta, i}); }
  std::span<const double> doc(int i) const { return vec({EntityKind::Doc, i}); }
  std::span<const double> word(int i) const { return vec({EntityKind::Word, i}); }

  // Independent uniform draws on the sphere for every row.
  void init_random_unit(std::mt19937_64& rng) {
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < count(static_cast<EntityKind>(k)); ++i) {
        Vec v = random_unit_vector(dim_, rng);
        auto row = vec({static_cast<EntityKind>(k), i});
        std::copy(v.begin(), v.end(), row.begin());
      }
  }

  double max_unit_norm_error() const {
    double worst = 0.0;
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < count(static_cast<EntityKind>(k)); ++i)
        worst = std::max(worst, std::abs(norm(vec({static_cast<EntityKind>(k), i})) - 1.0));
    return worst;
  }

  // Text dump: "p=<dim>" header, then one row per line as
  //   <kind>:<id> v1 ... v<dim>
  // with kind in {label, meta, doc, word} and full round-trip precision.
  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write embedding dump: " + path);
    f << "p=" << dim_ << '\n';
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < count(static_cast<EntityKind>(k)); ++i) {
        EntityRef r{static_cast<EntityKind>(k), i};
        f << kind_name(r.kind) << ':' << id_of(r);
        for (double x : vec(r)) f << ' ' << format_double(x);
        f << '\n';
      }
    if (!f) throw DataError("short write to embedding dump: " + path);
  }

  static EmbeddingTable load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingInputError("embedding dump not found: " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError("embedding dump is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("p=", 0) != 0) throw DataError("embedding dump: missing p= header");
    int dim = 0;
    try {
      dim = std::stoi(line.substr(2));
    } catch (...) {
      throw DataError("embedding dump: bad dimension header: " + line);
    }
    if (dim < 2) throw DataError("embedding dump: dimension must be >= 2");

    std::array<std::vector<std::string>, 4> ids;
    std::array<std::vector<double>, 4> rows;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      auto fail = [&](const std::string& what) -> DataError {
        return DataError("embedding dump line " + std::to_string(lineno) + ": " + what);
      };
      // Identifiers may contain spaces, so the coordinates are the last <dim>
      // whitespace-separated fields and the prefix is "<kind>:<id>".
      std::vector<std::pair<std::size_t, std::size_t>> fields;
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        if (i > start) fields.emplace_back(start, i - start);
      }
      if (fields.size() < static_cast<std::size_t>(dim) + 1) throw fail("too few fields");
      std::size_t first_coord = fields.size() - dim;
      std::string prefix =
          trim(line.substr(0, fields[first_coord].first));
      auto colon = prefix.find(':');
      if (colon == std::string::npos) throw fail("expected <kind>:<id> prefix");
      std::string kind = prefix.substr(0, colon);
      std::string id = prefix.substr(colon + 1);
      int k = -1;
      for (int kk = 0; kk < 4; ++kk)
        if (kind == kind_name(static_cast<EntityKind>(kk))) k = kk;
      if (k < 0) throw fail("unknown entity kind: " + kind);
      if (id.empty()) throw fail("empty entity id");
      ids[k].push_back(id);
      for (std::size_t c = first_coord; c < fields.size(); ++c) {
        std::string tok = line.substr(fields[c].first, fields[c].second);
        try {
          std::size_t pos = 0;
          double x = std::stod(tok, &pos);
          if (pos != tok.size()) throw std::invalid_argument(tok);
          rows[k].push_back(x);
        } catch (...) {
          throw fail("bad coordinate: " + tok);
        }
      }
    }
    EmbeddingTable t(dim, std::move(ids[0]), std::move(ids[1]), std::move(ids[2]),
                     std::move(ids[3]));
    for (int k = 0; k < 4; ++k) t.data_[k] = std::move(rows[k]);
    double err = t.max_unit_norm_error();
    if (err > 1e-6)
      throw DataError("embedding dump: row norm off the unit sphere by " + format_double(err));
    return t;
  }

 private:
  int dim_;
  std::array<std::vector<std::string>, 4> ids_;
  std::array<std::vector<double>, 4> data_;
  std::array<std::unordered_map<std::string, int>, 4> index_;
};

}  // namespace spherecat
