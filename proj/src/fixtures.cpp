// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "tokencal/error.hpp"

namespace tokencal {

namespace {

using Vec = std::vector<double>;

constexpr const char* kGeneralVocab[] = {"person", "wearing", "man", "woman", "a", "with"};
constexpr const char* kDetailVocab[] = {"striped", "red", "backpack", "denim", "scarf", "sneakers",
                                        "glasses", "cap", "plaid", "leather", "white", "umbrella"};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double gauss() { return normal_(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  Vec gauss_vec(std::size_t n, double scale) {
    Vec v(n);
    for (double& x : v) x = gauss() * scale;
    return v;
  }

  Vec unit_vec(std::size_t n) { return unit(gauss_vec(n, 1.0)); }

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

  static Vec unit(Vec v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    for (double& x : v) x /= s;
    return v;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

Vec add_scaled(const Vec& a, const Vec& b, double s) {
  Vec out(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * b[i];
  return out;
}

// Random [rows x cols] matrix with orthonormal columns (rows >= cols).
Matrix<double> orthonormal_columns(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix<double> q(rows, cols);
  std::vector<Vec> basis;
  while (basis.size() < cols) {
    Vec v = rng.gauss_vec(rows, 1.0);
    for (const Vec& b : basis) {
      double d = 0.0;
      for (std::size_t k = 0; k < rows; ++k) d += v[k] * b[k];
      for (std::size_t k = 0; k < rows; ++k) v[k] -= d * b[k];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    if (std::sqrt(n) < 1e-6) continue;
    basis.push_back(Rng::unit(std::move(v)));
  }
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) q(r, c) = basis[c][r];
  }
  return q;
}

Matrix<float> to_float(const Matrix<double>& m) {
  std::vector<float> data(m.flat().size());
  std::transform(m.flat().begin(), m.flat().end(), data.begin(), [](double x) { return static_cast<float>(x); });
  return Matrix<float>(m.rows(), m.cols(), std::move(data));
}

std::vector<float> to_float(const Vec& v) {
  std::vector<float> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return static_cast<float>(x); });
  return out;
}

// Token-space vector whose projection through `proj` (orthonormal columns)
// equals `joint`, plus noise in the projection's null space.
Vec lift(Rng& rng, const Matrix<double>& proj, const Vec& joint, double null_noise) {
  const std::size_t d = proj.rows();
  const std::size_t dj = proj.cols();
  Vec v(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < dj; ++c) v[r] += proj(r, c) * joint[c];
  }
  Vec noise = rng.gauss_vec(d, null_noise / std::sqrt(static_cast<double>(d)));
  Vec coeff(dj, 0.0);
  for (std::size_t c = 0; c < dj; ++c) {
    for (std::size_t r = 0; r < d; ++r) coeff[c] += proj(r, c) * noise[r];
  }
  for (std::size_t r = 0; r < d; ++r) {
    double in_span = 0.0;
    for (std::size_t c = 0; c < dj; ++c) in_span += proj(r, c) * coeff[c];
    v[r] += noise[r] - in_span;
  }
  return v;
}

Vec softmax(const Vec& logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    z += out[i];
  }
  for (double& x : out) x /= z;
  return out;
}

std::string make_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03zu", prefix, i);
  return buf;
}

std::vector<std::uint8_t> content_block(Rng& rng, Grid grid) {
  const std::size_t bh = std::max<std::size_t>(1, (grid.rows * 4 + 4) / 5);
  const std::size_t bw = std::max<std::size_t>(1, (grid.cols * 4 + 4) / 5);
  const std::size_t r0 = rng.index(grid.rows - bh + 1);
  const std::size_t c0 = rng.index(grid.cols - bw + 1);
  std::vector<std::uint8_t> mask(grid.size(), 0);
  for (std::size_t r = r0; r < r0 + bh; ++r) {
    for (std::size_t c = c0; c < c0 + bw; ++c) mask[r * grid.cols + c] = 1;
  }
  return mask;
}

AuditTensors make_audit(Rng& rng, std::size_t n) {
  const std::size_t h = 16;
  AuditTensors a;
  a.q_cls = to_float(rng.gauss_vec(h, 1.0));
  a.keys = Matrix<float>(n, h, to_float(rng.gauss_vec(n * h, 1.0)));
  a.values = Matrix<float>(n, h, to_float(rng.gauss_vec(n * h, 1.0)));
  Vec logits(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < h; ++k) logits[i] += static_cast<double>(a.q_cls[k]) * a.keys(i, k);
    logits[i] /= std::sqrt(static_cast<double>(h));
  }
  const Vec w = softmax(logits);
  Vec out(h, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < h; ++k) out[k] += w[i] * a.values(i, k);
  }
  a.cls_output = to_float(out);
  return a;
}

}  // namespace

void FixtureOptions::validate() const {
  auto fail = [](const char* what, const char* why) { throw Error(ErrorCode::kInvalidConfig, what, why); };
  if (images == 0) fail("images", "must be >= 1");
  if (spiked * 2 > images) fail("spiked", "at most half of the images can be spiked");
  if (grid.rows < 2 || grid.cols < 2) fail("grid", "fixture grids need at least 2x2 cells");
  if (token_dim < joint_dim || text_dim < joint_dim) fail("dims", "token widths must be >= joint width");
  if (joint_dim == 0) fail("joint_dim", "must be >= 1");
  if (words == 0 || general_words > words) fail("words", "need 1 <= words and general_words <= words");
  if (layers == 0) fail("layers", "must be >= 1");
  if (!(spike_mass > 0.0 && spike_mass < 1.0)) fail("spike_mass", "must lie in (0, 1)");
}

FixtureOptions distractor_scenario(std::uint64_t seed) {
  FixtureOptions o;
  o.seed = seed;
  return o;
}

FixtureOptions single_spike_scenario(std::uint64_t seed) {
  FixtureOptions o;
  o.seed = seed;
  o.images = 3;
  o.spiked = 1;
  o.attention_jitter = 0.0;
  o.content_bias = 0.0;
  return o;
}

FixtureSet make_fixtures(const FixtureOptions& o) {
  o.validate();
  Rng rng(o.seed);
  const std::size_t n = o.grid.size();
  const std::size_t dj = o.joint_dim;

  const Matrix<double> vis_proj = orthonormal_columns(rng, o.token_dim, dj);
  const Matrix<double> txt_proj = orthonormal_columns(rng, o.text_dim, dj);
  const Matrix<float> vis_proj_f = to_float(vis_proj);
  const Matrix<float> txt_proj_f = to_float(txt_proj);
  const Vec background = rng.unit_vec(dj);
  const Vec generic = rng.unit_vec(dj);

  std::vector<Vec> query_dirs(o.images);
  for (auto& t : query_dirs) t = rng.unit_vec(dj);

  // Spiked images and their lures are disjoint; each lure is used once.
  std::vector<std::size_t> order(o.images);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  std::vector<std::size_t> lure_of(o.images, o.images);
  for (std::size_t s = 0; s < o.spiked; ++s) {
    lure_of[order[s]] = order[o.spiked + s];
  }

  FixtureSet set;
  for (std::size_t i = 0; i < o.images; ++i) {
    VisualBundle b;
    b.image_id = make_id("img", i);
    b.provenance = "synthetic seed=" + std::to_string(o.seed);
    b.grid = o.grid;
    b.visual_projection = vis_proj_f;

    const Vec content = Rng::unit(add_scaled(query_dirs[i], rng.gauss_vec(dj, 1.0 / std::sqrt(double(dj))), 0.75));
    const auto block = content_block(rng, o.grid);

    Vec logits(n);
    std::vector<Vec> joints(n);
    for (std::size_t p = 0; p < n; ++p) {
      const Vec& base = block[p] ? content : background;
      joints[p] = Rng::unit(add_scaled(base, rng.gauss_vec(dj, 1.0 / std::sqrt(double(dj))), 0.3));
      logits[p] = (block[p] ? o.content_bias : 0.0) + o.attention_jitter * rng.gauss();
    }
    Vec attention = softmax(logits);
    if (o.attention_jitter == 0.0 && o.content_bias == 0.0) {
      attention.assign(n, 1.0 / static_cast<double>(n));
    }

    if (lure_of[i] < o.images) {
      std::vector<std::size_t> outside;
      for (std::size_t p = 0; p < n; ++p) {
        if (!block[p]) outside.push_back(p);
      }
      const std::size_t spike = outside[rng.index(outside.size())];
      joints[spike] =
          Rng::unit(add_scaled(query_dirs[lure_of[i]], rng.gauss_vec(dj, 1.0 / std::sqrt(double(dj))), 0.3));
      const double rest = 1.0 - attention[spike];
      for (std::size_t p = 0; p < n; ++p) {
        attention[p] = p == spike ? o.spike_mass : attention[p] * (1.0 - o.spike_mass) / rest;
      }
      set.spikes.push_back({b.image_id, spike, make_id("q", lure_of[i])});
    }

    Matrix<double> tokens(n, o.token_dim);
    for (std::size_t p = 0; p < n; ++p) {
      const Vec v = lift(rng, vis_proj, joints[p], 0.5);
      const double scale = rng.uniform(0.8, 1.2);
      for (std::size_t k = 0; k < o.token_dim; ++k) tokens(p, k) = v[k] * scale;
    }
    b.patch_tokens = to_float(tokens);
    b.cls_attention = to_float(attention);

    // Exported global: attention-pooled tokens through the projection.
    Vec pooled(o.token_dim, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t k = 0; k < o.token_dim; ++k) {
        pooled[k] += static_cast<double>(b.cls_attention[p]) * b.patch_tokens(p, k);
      }
    }
    Vec global(dj, 0.0);
    for (std::size_t k = 0; k < o.token_dim; ++k) {
      for (std::size_t c = 0; c < dj; ++c) global[c] += pooled[k] * vis_proj_f(k, c);
    }
    b.cls_joint = to_float(Rng::unit(global));
    if (o.audit) {
      b.audit = make_audit(rng, n);
    }
    set.gallery.push_back(std::move(b));
  }

  for (std::size_t q = 0; q < o.images; ++q) {
    TextBundle t;
    t.query_id = make_id("q", q);
    t.provenance = "synthetic seed=" + std::to_string(o.seed);
    t.text_projection = txt_proj_f;

    std::vector<std::size_t> slots(o.words);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    rng.shuffle(slots.begin(), slots.end());
    std::vector<std::uint8_t> is_general(o.words, 0);
    for (std::size_t g = 0; g < o.general_words; ++g) is_general[slots[g]] = 1;

    Matrix<double> tokens(o.words, o.text_dim);
    t.token_strings.resize(o.words);
    for (std::size_t w = 0; w < o.words; ++w) {
      const Vec noise = rng.gauss_vec(dj, 1.0 / std::sqrt(double(dj)));
      const Vec joint = is_general[w] ? Rng::unit(add_scaled(add_scaled(generic, query_dirs[q], 0.5), noise, 0.3))
                                      : Rng::unit(add_scaled(query_dirs[q], noise, 0.6));
      const Vec v = lift(rng, txt_proj, joint, 0.5);
      const double scale = rng.uniform(0.8, 1.2);
      for (std::size_t k = 0; k < o.text_dim; ++k) tokens(w, k) = v[k] * scale;
      t.token_strings[w] = is_general[w] ? kGeneralVocab[rng.index(std::size(kGeneralVocab))]
                                         : kDetailVocab[rng.index(std::size(kDetailVocab))];
    }
    t.token_embeddings = to_float(tokens);

    // Part of each row's mass sits on [EOT] / special positions.
    Matrix<double> attention(o.layers, o.words);
    for (std::size_t l = 0; l < o.layers; ++l) {
      Vec logits(o.words);
      for (std::size_t w = 0; w < o.words; ++w) logits[w] = (is_general[w] ? 1.5 : 0.0) + 0.3 * rng.gauss();
      const Vec row = softmax(logits);
      for (std::size_t w = 0; w < o.words; ++w) attention(l, w) = 0.8 * row[w];
    }
    t.eot_attention = to_float(attention);
    t.eot_norms.resize(o.layers);
    for (float& g : t.eot_norms) g = static_cast<float>(rng.uniform(5.0, 15.0));
    t.eot_joint = to_float(query_dirs[q]);

    set.relevance[t.query_id] = {make_id("img", q)};
    set.queries.push_back(std::move(t));
  }
  return set;
}

void write_fixtures(const FixtureSet& set, const std::filesystem::path& root) {
  for (const auto& b : set.gallery) {
    write_bundle(b, root / "gallery" / b.image_id);
  }
  for (const auto& t : set.queries) {
    write_bundle(t, root / "queries" / t.query_id);
  }
  save_relevance(set.relevance, root / "relevance.json");
  nlohmann::json spikes = nlohmann::json::array();
  for (const auto& s : set.spikes) {
    spikes.push_back({{"image_id", s.image_id}, {"patch", s.patch}, {"lure_query_id", s.lure_query_id}});
  }
  std::ofstream out(root / "spikes.json", std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, (root / "spikes.json").string(), "cannot write spike list");
  }
  out << spikes.dump(2) << '\n';
}

}  // namespace tokencal
