#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evalign::align {

enum class Role : std::uint8_t { Event, Image, Text };

std::string_view to_string(Role role);

using Embedding = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
/// Unit-length copy; throws ArgumentError for a zero or non-finite vector.
Embedding normalized(std::span<const double> v);

/// Row-major batch of equal-dimension embeddings with a fixed role tag.
/// Rows are unit length wherever an operation says "normalized"; loss
/// operations accept raw (pre-normalization) event rows.
class EmbeddingBatch {
 public:
  EmbeddingBatch(Role role, std::size_t dim);
  EmbeddingBatch(Role role, std::size_t dim, std::vector<double> values);
  static EmbeddingBatch from_rows(Role role, const std::vector<Embedding>& rows);

  Role role() const noexcept { return role_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : values_.size() / dim_; }
  bool empty() const noexcept { return values_.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<double> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }

  void push_back(std::span<const double> row);
  const std::vector<double>& values() const noexcept { return values_; }

  EmbeddingBatch normalized() const;
  bool is_normalized(double tol = 1e-6) const;
  EmbeddingBatch select(std::span<const std::size_t> indices) const;

  friend bool operator==(const EmbeddingBatch&, const EmbeddingBatch&) = default;

 private:
  Role role_;
  std::size_t dim_;
  std::vector<double> values_;
};

enum class GaussianShape : std::uint8_t { Pdf, Cdf };

struct LossConfig {
  double tau = 0.07;
  double gaussian_mu = 0.0;
  double gaussian_sigma = 1.0;
  GaussianShape gaussian_shape = GaussianShape::Pdf;
  std::size_t knn_k = 5;

  void validate() const;  // throws ConfigError
};

/// Gaussian modulation function N(v) under `cfg` (pdf by default).
double gaussian(double v, const LossConfig& cfg);

/// Loss value with its gradient with respect to the raw event rows
/// (row-major, same shape as the event batch).
struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;
};

/// -log softmax of the positive key among all keys at temperature tau.
/// `q` and `keys` are taken as given (callers pass unit vectors).
double infonce(std::span<const double> q, const EmbeddingBatch& keys, std::size_t positive_index,
               double tau);

/// Symmetrized InfoNCE: mean event->image term plus mean image->event term,
/// row i of each batch being the positive pair. Event rows are normalized
/// internally and the gradient flows through that normalization; image
/// rows are constants.
LossResult baseline_loss(const EmbeddingBatch& events, const EmbeddingBatch& images, double tau);

struct ModulationWeights {
  std::vector<double> lambda_unf;  // sums to 1
  std::vector<double> lambda;      // gaussian(1 - minmax(lambda_unf))
};

/// Uniformity share of each event embedding: its summed shifted similarity
/// (x_i . x_j + 1) to the other rows over the batch total, then min-max
/// normalized and passed through the Gaussian. When all shares are equal
/// the normalized value is 0.5 for every sample.
ModulationWeights modulation_weights(const EmbeddingBatch& events, const LossConfig& cfg);

/// The same weights from a row-major n x n cosine-similarity matrix; only
/// the off-diagonal entries are read. Useful for similarity patterns that
/// no set of unit vectors realizes exactly.
ModulationWeights modulation_weights_from_similarity(std::span<const double> similarity,
                                                    std::size_t n, const LossConfig& cfg);

/// Mean over the batch of lambda_i * ||x_i - y_i||^2. Weights are treated as
/// constants for the gradient.
LossResult modulation_loss(const EmbeddingBatch& events, const EmbeddingBatch& images,
                           const ModulationWeights& weights);

/// baseline_loss + modulation_loss with weights computed from the batch.
LossResult total_loss(const EmbeddingBatch& events, const EmbeddingBatch& images,
                      const LossConfig& cfg);

struct KnnTranslation {
  std::vector<std::size_t> indices;  // selected pool rows, by rank
  std::vector<double> weights;       // positive, sum to 1
  Embedding combined;                // sum of weights * rows, before normalization
  Embedding embedding;               // unit length
};

/// k nearest pool rows by cosine (ties to the lower index), blended with
/// weights (evt . x_k + 1) / sum_k' (evt . x_k' + 1).
KnnTranslation knn_translate_detail(std::span<const double> evt, const EmbeddingBatch& pool,
                                    std::size_t k);
Embedding knn_translate(std::span<const double> evt, const EmbeddingBatch& pool, std::size_t k);

struct ZeroShotResult {
  std::vector<double> scores;
  std::size_t predicted = 0;
};

/// Cosine score per class; argmax with ties to the lower class id.
ZeroShotResult zero_shot_scores(std::span<const double> evt, const EmbeddingBatch& class_texts);

struct DensityHistogram {
  std::vector<double> bin_centers;
  std::vector<double> values;  // bin count / max bin count
};

/// Histogram over [-1, 1] of all pairwise cosines (i < j) of the
/// normalized rows, scaled so the tallest bin is exactly 1.
DensityHistogram similarity_density(const EmbeddingBatch& batch, std::size_t n_bins);

/// "bin_center,normalized_count" CSV with a header row.
std::string density_csv(const DensityHistogram& hist);

struct WitnessCheck {
  std::string name;
  double greater = 0.0;  // side expected to be larger
  double lesser = 0.0;
  double margin() const { return greater - lesser; }
  bool holds() const { return greater > lesser; }
};

/// Embeddings in which the contrastive rankings all hold yet the event-text
/// ranking is reversed.
struct MisalignmentWitness {
  Embedding text_pos;
  Embedding image_pos;
  Embedding image_neg;
  Embedding event_pos;
  Embedding event_neg;
  std::vector<WitnessCheck> checks;      // the rankings the witness asserts
  std::vector<WitnessCheck> exemption;   // same rankings with events = images
  double min_margin() const;
};

/// Throws ArgumentError for dim < 4. Extra dimensions are zero.
MisalignmentWitness lemma1_witness(std::size_t dim);

std::string witness_report_json(const MisalignmentWitness& witness);

}  // namespace evalign::align
