#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "spherecat/embedding.hpp"
#include "spherecat/errors.hpp"
#include "spherecat/sphere.hpp"

namespace spherecat {

static_assert(std::endian::native == std::endian::little,
              "model serialization assumes a little-endian host");

struct CnnConfig {
  std::vector<int> widths{2, 3, 4, 5};  // convolution filter widths
  int maps = 20;                        // feature maps per width
  int batch = 16;
  double lr = 0.01;
  int max_epochs = 50;
  double early_stop_acc = 0.99;  // stop once epoch train accuracy reaches this
};

// Convolutional sentence classifier: a private, fine-tuned copy of the word
// embeddings, per-width ReLU convolution banks, max-over-time pooling and a
// dense softmax head. Sequences shorter than the widest filter are padded
// with a reserved all-zero token that never receives gradient.
class KimCnn {
 public:
  int n_classes = 0;
  int vocab = 0;  // real word rows; row `vocab` is the padding token
  int dim = 0;
  CnnConfig cfg;
  std::vector<double> emb;                  // (vocab + 1) x dim
  std::vector<std::vector<double>> filt;    // per width: maps x (width * dim)
  std::vector<std::vector<double>> filt_b;  // per width: maps
  std::vector<double> dense;                // n_classes x feat_dim()
  std::vector<double> dense_b;              // n_classes

  KimCnn() = default;

  KimCnn(int classes, int vocab_size, int dimension, CnnConfig config)
      : n_classes(classes), vocab(vocab_size), dim(dimension), cfg(std::move(config)) {
    if (n_classes < 2) throw DataError("classifier needs at least 2 classes");
    if (vocab < 1) throw DataError("classifier needs a non-empty vocabulary");
    if (cfg.widths.empty() || cfg.maps < 1) throw ConfigError("classifier: bad filter shape");
    for (int w : cfg.widths)
      if (w < 1) throw ConfigError("classifier: filter width must be >= 1");
    emb.assign(static_cast<std::size_t>(vocab + 1) * dim, 0.0);
    filt.resize(cfg.widths.size());
    filt_b.resize(cfg.widths.size());
    for (std::size_t wi = 0; wi < cfg.widths.size(); ++wi) {
      filt[wi].assign(static_cast<std::size_t>(cfg.maps) * cfg.widths[wi] * dim, 0.0);
      filt_b[wi].assign(cfg.maps, 0.0);
    }
    dense.assign(static_cast<std::size_t>(n_classes) * feat_dim(), 0.0);
    dense_b.assign(n_classes, 0.0);
  }

  int feat_dim() const { return cfg.maps * static_cast<int>(cfg.widths.size()); }
  int pad_id() const { return vocab; }
  int max_width() const { return *std::max_element(cfg.widths.begin(), cfg.widths.end()); }

  // Copies the shared word vectors into the private embedding layer. The
  // padding row stays zero.
  void set_word_vectors(const EmbeddingTable& table) {
    if (table.count(EntityKind::Word) != vocab || table.dim() != dim)
      throw DataError("classifier: embedding table shape mismatch");
    for (int w = 0; w < vocab; ++w) {
      auto row = table.word(w);
      std::copy(row.begin(), row.end(), emb.begin() + static_cast<std::size_t>(w) * dim);
    }
  }

  // Uniform Glorot-style init for the convolution banks. The dense head stays
  // zero, which makes a fresh classifier predict the uniform distribution.
  void init_filters(std::mt19937_64& rng) {
    for (std::size_t wi = 0; wi < cfg.widths.size(); ++wi) {
      double r = std::sqrt(6.0 / (cfg.widths[wi] * dim + 1));
      std::uniform_real_distribution<double> unif(-r, r);
      for (double& x : filt[wi]) x = unif(rng);
      std::fill(filt_b[wi].begin(), filt_b[wi].end(), 0.0);
    }
  }

  struct Cache {
    std::vector<int> padded;
    std::vector<double> pre;     // feat_dim: max pre-activation per feature map
    std::vector<int> arg;        // feat_dim: window start of the max, -1 if none
    std::vector<double> feat;    // feat_dim: ReLU of pre
    std::vector<double> logits;  // n_classes
    std::vector<double> probs;   // n_classes
  };

  void forward_cached(std::span<const int> tokens, Cache& c) const {
    c.padded.assign(tokens.begin(), tokens.end());
    for (int t : c.padded)
      if (t < 0 || t > vocab) throw DataError("classifier: token id out of range");
    while (static_cast<int>(c.padded.size()) < max_width()) c.padded.push_back(pad_id());
    const int n = static_cast<int>(c.padded.size());
    const int fd = feat_dim();
    c.pre.assign(fd, 0.0);
    c.arg.assign(fd, -1);
    c.feat.assign(fd, 0.0);
    for (std::size_t wi = 0; wi < cfg.widths.size(); ++wi) {
      const int width = cfg.widths[wi];
      const double* bank = filt[wi].data();
      for (int m = 0; m < cfg.maps; ++m) {
        const double* f = bank + static_cast<std::size_t>(m) * width * dim;
        double best = 0.0;
        int best_pos = -1;
        for (int pos = 0; pos + width <= n; ++pos) {
          double s = filt_b[wi][m];
          const double* fw = f;
          for (int k = 0; k < width; ++k) {
            const double* x = emb.data() + static_cast<std::size_t>(c.padded[pos + k]) * dim;
            for (int i = 0; i < dim; ++i) s += fw[i] * x[i];
            fw += dim;
          }
          if (best_pos < 0 || s > best) {
            best = s;
            best_pos = pos;
          }
        }
        int fi = static_cast<int>(wi) * cfg.maps + m;
        c.pre[fi] = best;
        c.arg[fi] = best_pos;
        c.feat[fi] = std::max(0.0, best);  // max over time commutes with ReLU
      }
    }
    c.logits.assign(n_classes, 0.0);
    for (int cl = 0; cl < n_classes; ++cl) {
      double s = dense_b[cl];
      const double* row = dense.data() + static_cast<std::size_t>(cl) * fd;
      for (int i = 0; i < fd; ++i) s += row[i] * c.feat[i];
      c.logits[cl] = s;
    }
    double mx = *std::max_element(c.logits.begin(), c.logits.end());
    double z = 0.0;
    c.probs.assign(n_classes, 0.0);
    for (int cl = 0; cl < n_classes; ++cl) {
      c.probs[cl] = std::exp(c.logits[cl] - mx);
      z += c.probs[cl];
    }
    for (double& p : c.probs) p /= z;
  }

  // Probability distribution over the classes.
  Vec forward(std::span<const int> tokens) const {
    Cache c;
    forward_cached(tokens, c);
    return c.probs;
  }

  struct Grads {
    std::vector<double> dense, dense_b;
    std::vector<std::vector<double>> filt, filt_b;
    std::vector<double> emb;       // same shape as KimCnn::emb
    std::vector<int> emb_touched;  // rows with nonzero gradient
    std::vector<char> emb_seen;

    void init(const KimCnn& net) {
      dense.assign(net.dense.size(), 0.0);
      dense_b.assign(net.dense_b.size(), 0.0);
      filt.resize(net.filt.size());
      filt_b.resize(net.filt_b.size());
      for (std::size_t i = 0; i < net.filt.size(); ++i) {
        filt[i].assign(net.filt[i].size(), 0.0);
        filt_b[i].assign(net.filt_b[i].size(), 0.0);
      }
      emb.assign(net.emb.size(), 0.0);
      emb_touched.clear();
      emb_seen.assign(net.vocab + 1, 0);
    }

    void clear(const KimCnn& net) {
      std::fill(dense.begin(), dense.end(), 0.0);
      std::fill(dense_b.begin(), dense_b.end(), 0.0);
      for (auto& f : filt) std::fill(f.begin(), f.end(), 0.0);
      for (auto& f : filt_b) std::fill(f.begin(), f.end(), 0.0);
      for (int r : emb_touched)
        std::fill(emb.begin() + static_cast<std::size_t>(r) * net.dim,
                  emb.begin() + static_cast<std::size_t>(r + 1) * net.dim, 0.0);
      for (int r : emb_touched) emb_seen[r] = 0;
      emb_touched.clear();
    }
  };

  // Cross-entropy loss of one example; accumulates parameter gradients.
  double loss_and_grads(std::span<const int> tokens, int target, Cache& c, Grads& g) const {
    if (target < 0 || target >= n_classes) throw DataError("classifier: target out of range");
    forward_cached(tokens, c);
    const int fd = feat_dim();
    double mx = *std::max_element(c.logits.begin(), c.logits.end());
    double lse = 0.0;
    for (double l : c.logits) lse += std::exp(l - mx);
    double loss = std::log(lse) + mx - c.logits[target];

    // dL/dlogit = p - 1{target}
    std::vector<double> dfeat(fd, 0.0);
    for (int cl = 0; cl < n_classes; ++cl) {
      double dl = c.probs[cl] - (cl == target ? 1.0 : 0.0);
      g.dense_b[cl] += dl;
      double* grow = g.dense.data() + static_cast<std::size_t>(cl) * fd;
      const double* row = dense.data() + static_cast<std::size_t>(cl) * fd;
      for (int i = 0; i < fd; ++i) {
        grow[i] += dl * c.feat[i];
        dfeat[i] += dl * row[i];
      }
    }
    // Pooling routes each feature's gradient to its argmax window; ReLU gates
    // on the positive pre-activation.
    for (std::size_t wi = 0; wi < cfg.widths.size(); ++wi) {
      const int width = cfg.widths[wi];
      for (int m = 0; m < cfg.maps; ++m) {
        int fi = static_cast<int>(wi) * cfg.maps + m;
        if (c.arg[fi] < 0 || c.pre[fi] <= 0.0) continue;
        double dact = dfeat[fi];
        if (dact == 0.0) continue;
        g.filt_b[wi][m] += dact;
        const int pos = c.arg[fi];
        double* gf = g.filt[wi].data() + static_cast<std::size_t>(m) * width * dim;
        const double* f = filt[wi].data() + static_cast<std::size_t>(m) * width * dim;
        for (int k = 0; k < width; ++k) {
          int tok = c.padded[pos + k];
          const double* x = emb.data() + static_cast<std::size_t>(tok) * dim;
          for (int i = 0; i < dim; ++i) gf[k * dim + i] += dact * x[i];
          if (tok != pad_id()) {  // padding row is frozen at zero
            double* ge = g.emb.data() + static_cast<std::size_t>(tok) * dim;
            for (int i = 0; i < dim; ++i) ge[i] += dact * f[k * dim + i];
            if (!g.emb_seen[tok]) {
              g.emb_seen[tok] = 1;
              g.emb_touched.push_back(tok);
            }
          }
        }
      }
    }
    return loss;
  }

  struct Example {
    std::vector<int> tokens;
    int label;
  };

  struct TrainResult {
    int epochs = 0;
    double train_accuracy = 0.0;
    double final_loss = 0.0;
  };

  // Mini-batch SGD over shuffled examples. Accuracy is measured on the
  // pre-update forward passes of the running epoch; training stops early once
  // it reaches cfg.early_stop_acc.
  TrainResult train(const std::vector<Example>& examples, std::mt19937_64& rng) {
    if (examples.empty()) throw DataError("classifier: no training examples");
    for (const auto& e : examples)
      if (e.label < 0 || e.label >= n_classes) throw DataError("classifier: label out of range");
    init_filters(rng);
    std::vector<std::uint32_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0u);
    Cache cache;
    Grads grads;
    grads.init(*this);
    TrainResult res;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      long long correct = 0;
      double loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
        std::size_t stop = std::min(order.size(), start + cfg.batch);
        grads.clear(*this);
        for (std::size_t k = start; k < stop; ++k) {
          const Example& ex = examples[order[k]];
          loss_sum += loss_and_grads(ex.tokens, ex.label, cache, grads);
          int pred = static_cast<int>(
              std::max_element(cache.probs.begin(), cache.probs.end()) - cache.probs.begin());
          correct += pred == ex.label;
        }
        double scale = cfg.lr / static_cast<double>(stop - start);
        for (std::size_t i = 0; i < dense.size(); ++i) dense[i] -= scale * grads.dense[i];
        for (std::size_t i = 0; i < dense_b.size(); ++i) dense_b[i] -= scale * grads.dense_b[i];
        for (std::size_t wi = 0; wi < filt.size(); ++wi) {
          for (std::size_t i = 0; i < filt[wi].size(); ++i)
            filt[wi][i] -= scale * grads.filt[wi][i];
          for (std::size_t i = 0; i < filt_b[wi].size(); ++i)
            filt_b[wi][i] -= scale * grads.filt_b[wi][i];
        }
        for (int row : grads.emb_touched) {
          double* e = emb.data() + static_cast<std::size_t>(row) * dim;
          const double* ge = grads.emb.data() + static_cast<std::size_t>(row) * dim;
          for (int i = 0; i < dim; ++i) e[i] -= scale * ge[i];
        }
      }
      res.epochs = epoch + 1;
      res.train_accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
      res.final_loss = loss_sum / static_cast<double>(examples.size());
      if (res.train_accuracy >= cfg.early_stop_acc) break;
    }
    return res;
  }

  // Flat little-endian float32 serialization with a small header.
  void write(std::ostream& out) const {
    auto put_i32 = [&](std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_f32 = [&](const std::vector<double>& xs) {
      std::vector<float> f(xs.begin(), xs.end());
      out.write(reinterpret_cast<const char*>(f.data()),
                static_cast<std::streamsize>(f.size() * sizeof(float)));
    };
    put_i32(0x53434e31);  // "SCN1"
    put_i32(n_classes);
    put_i32(vocab);
    put_i32(dim);
    put_i32(static_cast<std::int32_t>(cfg.widths.size()));
    for (int w : cfg.widths) put_i32(w);
    put_i32(cfg.maps);
    put_f32(emb);
    for (std::size_t wi = 0; wi < filt.size(); ++wi) {
      put_f32(filt[wi]);
      put_f32(filt_b[wi]);
    }
    put_f32(dense);
    put_f32(dense_b);
  }

  static KimCnn read(std::istream& in) {
    auto get_i32 = [&]() {
      std::int32_t v = 0;
      in.read(reinterpret_cast<char*>(&v), 4);
      if (!in) throw DataError("model file: truncated header");
      return v;
    };
    if (get_i32() != 0x53434e31) throw DataError("model file: bad magic");
    int classes = get_i32();
    int vocab_size = get_i32();
    int dimension = get_i32();
    int n_widths = get_i32();
    if (classes < 2 || vocab_size < 1 || dimension < 1 || n_widths < 1 || n_widths > 64)
      throw DataError("model file: implausible header");
    CnnConfig cfg;
    cfg.widths.resize(n_widths);
    for (int& w : cfg.widths) w = get_i32();
    cfg.maps = get_i32();
    if (cfg.maps < 1) throw DataError("model file: implausible map count");
    KimCnn net(classes, vocab_size, dimension, cfg);
    auto get_f32 = [&](std::vector<double>& xs) {
      std::vector<float> f(xs.size());
      in.read(reinterpret_cast<char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
      if (!in) throw DataError("model file: truncated weights");
      std::copy(f.begin(), f.end(), xs.begin());
    };
    get_f32(net.emb);
    for (std::size_t wi = 0; wi < net.filt.size(); ++wi) {
      get_f32(net.filt[wi]);
      get_f32(net.filt_b[wi]);
    }
    get_f32(net.dense);
    get_f32(net.dense_b);
    return net;
  }
};

}  // namespace spherecat
