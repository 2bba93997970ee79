#include "evalign/alignment.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "evalign/error.hpp"

namespace evalign::align {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Event: return "event";
    case Role::Image: return "image";
    case Role::Text: return "text";
  }
  return "unknown";
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Embedding normalized(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw ArgumentError("cannot normalize a zero vector");
  Embedding out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

// ---------------------------------------------------------------------------
// EmbeddingBatch

EmbeddingBatch::EmbeddingBatch(Role role, std::size_t dim) : role_(role), dim_(dim) {
  if (dim == 0) throw ArgumentError("embedding dimension must be positive");
}

EmbeddingBatch::EmbeddingBatch(Role role, std::size_t dim, std::vector<double> values)
    : role_(role), dim_(dim), values_(std::move(values)) {
  if (dim == 0) throw ArgumentError("embedding dimension must be positive");
  if (values_.size() % dim != 0) throw ArgumentError("value count is not a multiple of dim");
}

EmbeddingBatch EmbeddingBatch::from_rows(Role role, const std::vector<Embedding>& rows) {
  if (rows.empty()) throw ArgumentError("from_rows needs at least one row");
  EmbeddingBatch batch(role, rows.front().size());
  for (const auto& r : rows) batch.push_back(r);
  return batch;
}

void EmbeddingBatch::push_back(std::span<const double> row) {
  if (row.size() != dim_) throw ArgumentError("row dimension mismatch");
  values_.insert(values_.end(), row.begin(), row.end());
}

EmbeddingBatch EmbeddingBatch::normalized() const {
  EmbeddingBatch out(role_, dim_);
  out.values_.reserve(values_.size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(align::normalized(row(i)));
  return out;
}

bool EmbeddingBatch::is_normalized(double tol) const {
  for (std::size_t i = 0; i < size(); ++i) {
    if (!(std::abs(norm(row(i)) - 1.0) <= tol)) return false;
  }
  return true;
}

EmbeddingBatch EmbeddingBatch::select(std::span<const std::size_t> indices) const {
  EmbeddingBatch out(role_, dim_);
  out.values_.reserve(indices.size() * dim_);
  for (std::size_t i : indices) {
    if (i >= size()) throw ArgumentError("row index out of range");
    out.push_back(row(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (!(gaussian_sigma > 0.0)) throw ConfigError("gaussian_sigma must be positive");
  if (!std::isfinite(gaussian_mu)) throw ConfigError("gaussian_mu must be finite");
  if (knn_k < 1) throw ConfigError("knn_k must be at least 1");
}

double gaussian(double v, const LossConfig& cfg) {
  const double z = (v - cfg.gaussian_mu) / cfg.gaussian_sigma;
  if (cfg.gaussian_shape == GaussianShape::Cdf) {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
  }
  return std::exp(-0.5 * z * z) / (cfg.gaussian_sigma * std::sqrt(2.0 * std::numbers::pi));
}

// ---------------------------------------------------------------------------
// Losses

namespace {

void require_tau(double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
}

void require_pairs(const EmbeddingBatch& events, const EmbeddingBatch& images) {
  if (events.size() != images.size()) throw ArgumentError("event/image batch sizes differ");
  if (events.dim() != images.dim()) throw ArgumentError("event/image dimensions differ");
  if (events.empty()) throw ArgumentError("empty batch");
}

// Pulls dL/d(unit row) back to dL/d(raw row): (g - (g.e) e) / |x|.
void backprop_normalization(const EmbeddingBatch& raw, const EmbeddingBatch& unit,
                            std::vector<double>& grad) {
  const std::size_t d = raw.dim();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double r = norm(raw.row(i));
    std::span<double> g(grad.data() + i * d, d);
    const auto e = unit.row(i);
    const double ge = dot(g, e);
    for (std::size_t k = 0; k < d; ++k) g[k] = (g[k] - ge * e[k]) / r;
  }
}

double log_sum_exp(std::span<const double> v) {
  const double peak = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - peak);
  return peak + std::log(acc);
}

}  // namespace

double infonce(std::span<const double> q, const EmbeddingBatch& keys, std::size_t positive_index,
               double tau) {
  require_tau(tau);
  if (positive_index >= keys.size()) throw ArgumentError("positive index out of range");
  if (q.size() != keys.dim()) throw ArgumentError("query/key dimension mismatch");
  std::vector<double> logits(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) logits[j] = dot(q, keys.row(j)) / tau;
  return log_sum_exp(logits) - logits[positive_index];
}

LossResult baseline_loss(const EmbeddingBatch& events, const EmbeddingBatch& images, double tau) {
  require_tau(tau);
  require_pairs(events, images);
  const std::size_t n = events.size();
  const std::size_t d = events.dim();
  if (n < 2) throw ArgumentError("baseline loss needs at least two pairs (negatives)");

  const EmbeddingBatch unit = events.normalized();
  std::vector<double> logits(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) logits[i * n + j] = dot(unit.row(i), images.row(j)) / tau;
  }

  // dL/dlogits accumulates both directions.
  std::vector<double> dlogits(n * n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss_evt = 0.0;
  double loss_img = 0.0;
  std::vector<double> buf(n);

  for (std::size_t i = 0; i < n; ++i) {  // event i queries images
    std::span<const double> row(logits.data() + i * n, n);
    const double lse = log_sum_exp(row);
    loss_evt += lse - row[i];
    for (std::size_t j = 0; j < n; ++j) {
      dlogits[i * n + j] += inv_n * (std::exp(row[j] - lse) - (i == j ? 1.0 : 0.0));
    }
  }
  for (std::size_t j = 0; j < n; ++j) {  // image j queries events
    for (std::size_t i = 0; i < n; ++i) buf[i] = logits[i * n + j];
    const double lse = log_sum_exp(buf);
    loss_img += lse - buf[j];
    for (std::size_t i = 0; i < n; ++i) {
      dlogits[i * n + j] += inv_n * (std::exp(buf[i] - lse) - (i == j ? 1.0 : 0.0));
    }
  }

  LossResult result;
  result.loss = inv_n * loss_evt + inv_n * loss_img;
  result.grad.assign(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double c = dlogits[i * n + j] / tau;
      const auto img = images.row(j);
      for (std::size_t k = 0; k < d; ++k) result.grad[i * d + k] += c * img[k];
    }
  }
  backprop_normalization(events, unit, result.grad);
  return result;
}

ModulationWeights modulation_weights_from_similarity(std::span<const double> similarity,
                                                    std::size_t n, const LossConfig& cfg) {
  cfg.validate();
  if (n < 2) throw ArgumentError("modulation weights need at least two events");
  if (similarity.size() != n * n) throw ArgumentError("similarity matrix must be n x n");
  for (double s : similarity) {
    if (!std::isfinite(s)) throw ArgumentError("similarity matrix must be finite");
  }

  std::vector<double> shares(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) shares[i] += similarity[i * n + j] + 1.0;
    }
  }
  const double total = std::accumulate(shares.begin(), shares.end(), 0.0);

  ModulationWeights w;
  w.lambda_unf.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Every pair antipodal leaves nothing to share; split evenly.
    w.lambda_unf[i] = total > 0.0 ? shares[i] / total : 1.0 / static_cast<double>(n);
  }

  const auto [lo_it, hi_it] = std::minmax_element(w.lambda_unf.begin(), w.lambda_unf.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  // Spreads at rounding level count as "all equal".
  const bool degenerate = !(hi - lo > 1e-12 * hi);
  w.lambda.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double scaled = degenerate ? 0.5 : (w.lambda_unf[i] - lo) / (hi - lo);
    w.lambda[i] = gaussian(1.0 - scaled, cfg);
  }
  return w;
}

ModulationWeights modulation_weights(const EmbeddingBatch& events, const LossConfig& cfg) {
  const std::size_t n = events.size();
  if (n < 2) throw ArgumentError("modulation weights need at least two events");
  const EmbeddingBatch unit = events.normalized();
  std::vector<double> similarity(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      similarity[i * n + j] = similarity[j * n + i] = dot(unit.row(i), unit.row(j));
    }
  }
  return modulation_weights_from_similarity(similarity, n, cfg);
}

LossResult modulation_loss(const EmbeddingBatch& events, const EmbeddingBatch& images,
                           const ModulationWeights& weights) {
  require_pairs(events, images);
  const std::size_t n = events.size();
  const std::size_t d = events.dim();
  if (weights.lambda.size() != n) throw ArgumentError("weight count does not match batch size");

  const EmbeddingBatch unit = events.normalized();
  const double inv_n = 1.0 / static_cast<double>(n);
  LossResult result;
  result.grad.assign(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = unit.row(i);
    const auto m = images.row(i);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = e[k] - m[k];
      sq += diff * diff;
      result.grad[i * d + k] = 2.0 * inv_n * weights.lambda[i] * diff;
    }
    result.loss += weights.lambda[i] * sq;
  }
  result.loss *= inv_n;
  backprop_normalization(events, unit, result.grad);
  return result;
}

LossResult total_loss(const EmbeddingBatch& events, const EmbeddingBatch& images,
                      const LossConfig& cfg) {
  cfg.validate();
  LossResult base = baseline_loss(events, images, cfg.tau);
  const LossResult mod = modulation_loss(events, images, modulation_weights(events, cfg));
  base.loss += mod.loss;
  for (std::size_t i = 0; i < base.grad.size(); ++i) base.grad[i] += mod.grad[i];
  return base;
}

// ---------------------------------------------------------------------------
// Retrieval and scoring

KnnTranslation knn_translate_detail(std::span<const double> evt, const EmbeddingBatch& pool,
                                    std::size_t k) {
  if (k < 1) throw ArgumentError("k must be at least 1");
  if (k > pool.size()) throw ArgumentError("k exceeds the pool size");
  if (evt.size() != pool.dim()) throw ArgumentError("query/pool dimension mismatch");

  std::vector<double> sims(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) sims[i] = dot(evt, pool.row(i));
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return sims[a] != sims[b] ? sims[a] > sims[b] : a < b;
                    });

  KnnTranslation out;
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  double denom = 0.0;
  for (std::size_t idx : out.indices) denom += sims[idx] + 1.0;
  out.weights.resize(k);
  for (std::size_t r = 0; r < k; ++r) {
    out.weights[r] = denom > 0.0 ? (sims[out.indices[r]] + 1.0) / denom
                                 : 1.0 / static_cast<double>(k);
  }
  out.combined.assign(pool.dim(), 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const auto row = pool.row(out.indices[r]);
    for (std::size_t c = 0; c < pool.dim(); ++c) out.combined[c] += out.weights[r] * row[c];
  }
  out.embedding = normalized(out.combined);
  return out;
}

Embedding knn_translate(std::span<const double> evt, const EmbeddingBatch& pool, std::size_t k) {
  return knn_translate_detail(evt, pool, k).embedding;
}

ZeroShotResult zero_shot_scores(std::span<const double> evt, const EmbeddingBatch& class_texts) {
  if (class_texts.empty()) throw ArgumentError("no class embeddings to score against");
  if (evt.size() != class_texts.dim()) throw ArgumentError("query/class dimension mismatch");
  ZeroShotResult out;
  out.scores.resize(class_texts.size());
  for (std::size_t c = 0; c < class_texts.size(); ++c) {
    out.scores[c] = dot(evt, class_texts.row(c));
    if (out.scores[c] > out.scores[out.predicted]) out.predicted = c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Analysis

DensityHistogram similarity_density(const EmbeddingBatch& batch, std::size_t n_bins) {
  if (batch.size() < 2) throw ArgumentError("similarity density needs at least two embeddings");
  if (n_bins < 1) throw ArgumentError("need at least one bin");
  const EmbeddingBatch unit = batch.normalized();
  std::vector<std::uint64_t> counts(n_bins, 0);
  const double width = 2.0 / static_cast<double>(n_bins);
  for (std::size_t i = 0; i < unit.size(); ++i) {
    for (std::size_t j = i + 1; j < unit.size(); ++j) {
      const double c = std::clamp(dot(unit.row(i), unit.row(j)), -1.0, 1.0);
      auto bin = static_cast<std::size_t>(std::floor((c + 1.0) / width));
      counts[std::min(bin, n_bins - 1)] += 1;
    }
  }
  const double peak = static_cast<double>(*std::max_element(counts.begin(), counts.end()));
  DensityHistogram hist;
  hist.bin_centers.resize(n_bins);
  hist.values.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    hist.bin_centers[b] = -1.0 + (static_cast<double>(b) + 0.5) * width;
    hist.values[b] = static_cast<double>(counts[b]) / peak;
  }
  return hist;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string density_csv(const DensityHistogram& hist) {
  std::string out = "bin_center,normalized_count\n";
  for (std::size_t b = 0; b < hist.values.size(); ++b) {
    out += shortest(hist.bin_centers[b]);
    out += ',';
    out += shortest(hist.values[b]);
    out += '\n';
  }
  return out;
}

double MisalignmentWitness::min_margin() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : checks) m = std::min(m, c.margin());
  for (const auto& c : exemption) m = std::min(m, c.margin());
  return m;
}

MisalignmentWitness lemma1_witness(std::size_t dim) {
  if (dim < 4) throw ArgumentError("the witness needs at least four dimensions");
  auto vec = [dim](std::initializer_list<double> head) {
    Embedding v(dim, 0.0);
    std::copy(head.begin(), head.end(), v.begin());
    return normalized(v);
  };
  // Event rows put their excess mass in dimensions 3 and 4; the text anchor
  // shares mass with dimension 4, which only the negative event uses.
  const double half_sqrt3 = std::sqrt(3.0) / 2.0;
  MisalignmentWitness w;
  w.text_pos = vec({1.0, 0.0, 0.0, 1.0});
  w.image_pos = vec({1.0, 0.0, 0.0, 0.0});
  w.image_neg = vec({0.0, 1.0, 0.0, 0.0});
  w.event_pos = vec({0.5, 0.0, half_sqrt3, 0.0});
  w.event_neg = vec({0.0, 0.5, 0.0, half_sqrt3});

  w.checks = {
      {"image_text_ranking", dot(w.image_pos, w.text_pos), dot(w.image_neg, w.text_pos)},
      {"event_query_prefers_paired_image", dot(w.event_pos, w.image_pos),
       dot(w.event_pos, w.image_neg)},
      {"negative_event_prefers_its_image", dot(w.event_neg, w.image_neg),
       dot(w.event_neg, w.image_pos)},
      {"image_query_prefers_paired_event", dot(w.image_pos, w.event_pos),
       dot(w.image_pos, w.event_neg)},
      {"event_text_ranking_reversed", dot(w.event_neg, w.text_pos),
       dot(w.event_pos, w.text_pos)},
  };
  // Perfect alignment: events coincide with their images.
  w.exemption = {
      {"aligned_event_text_ranking_preserved", dot(w.image_pos, w.text_pos),
       dot(w.image_neg, w.text_pos)},
  };
  return w;
}

std::string witness_report_json(const MisalignmentWitness& witness) {
  using nlohmann::json;
  auto checks = [](const std::vector<WitnessCheck>& list) {
    json arr = json::array();
    for (const auto& c : list) {
      arr.push_back({{"name", c.name},
                     {"greater", c.greater},
                     {"lesser", c.lesser},
                     {"margin", c.margin()},
                     {"holds", c.holds()}});
    }
    return arr;
  };
  json doc = {
      {"dim", witness.text_pos.size()},
      {"vectors",
       {{"text_pos", witness.text_pos},
        {"image_pos", witness.image_pos},
        {"image_neg", witness.image_neg},
        {"event_pos", witness.event_pos},
        {"event_neg", witness.event_neg}}},
      {"checks", checks(witness.checks)},
      {"exemption", checks(witness.exemption)},
      {"min_margin", witness.min_margin()},
  };
  return doc.dump(2) + "\n";
}

}  // namespace evalign::align
