#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evalign/alignment.hpp"
#include "evalign/encoder.hpp"
#include "evalign/world.hpp"

namespace evalign::train {

enum class Objective : std::uint8_t { Baseline, BaselineMod, ModOnly };

std::string_view to_string(Objective objective);
/// "baseline" | "baseline+mod" | "mod-only"; throws ConfigError.
Objective parse_objective(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.5;
  std::size_t hidden = 64;
  std::uint64_t seed = 1;
  Objective objective = Objective::BaselineMod;
  // A sharper temperature than the usual 0.07 suits the small synthetic world.
  align::LossConfig loss{.tau = 0.04};

  void validate() const;  // throws ConfigError
};

/// Objective value and gradient with respect to raw encoder outputs.
align::LossResult objective_loss(const align::EmbeddingBatch& events,
                                 const align::EmbeddingBatch& images, Objective objective,
                                 const align::LossConfig& cfg);

/// Objective and its gradient with respect to the encoder parameters for
/// one batch of (feature, image embedding) pairs.
align::LossResult encoder_objective(const Encoder& encoder,
                                    const std::vector<std::vector<double>>& features,
                                    const align::EmbeddingBatch& images, Objective objective,
                                    const align::LossConfig& cfg);

struct TrainResult {
  Encoder encoder;
  std::vector<double> loss_curve;  // mean batch objective per epoch
  double initial_objective = 0.0;  // full training split, before the first step
  double final_objective = 0.0;    // full training split, after the last step
};

/// Plain mini-batch SGD with a fixed step on the training split only.
/// Throws DivergenceError on a non-finite loss and ArgumentError if a
/// training sample does not belong to a training class.
TrainResult train(const SyntheticWorld& world, const TrainConfig& cfg);

/// Objective over the full training split (one batch).
double training_objective(const Encoder& encoder, const SyntheticWorld& world,
                          Objective objective, const align::LossConfig& cfg);

enum class EvalOption : std::uint8_t { Raw, KnnTranslated, OptimizedText };

std::string_view to_string(EvalOption option);
/// "raw" | "knn_translated" | "optimized_text"; throws ConfigError.
EvalOption parse_eval_option(std::string_view name);

struct TextOptimizationConfig {
  std::size_t steps = 100;
  double learning_rate = 0.05;
  double tau = 0.07;
};

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

/// Zero-shot accuracy of precomputed unit event embeddings of the test
/// split (and calibration split, used only by OptimizedText).
EvalResult evaluate_embeddings(const align::EmbeddingBatch& test_events,
                               const align::EmbeddingBatch& calibration_events,
                               const SyntheticWorld& world, EvalOption option,
                               const align::LossConfig& loss,
                               const TextOptimizationConfig& text = {});

EvalResult evaluate_zero_shot(const Encoder& encoder, const SyntheticWorld& world,
                              EvalOption option, const align::LossConfig& loss,
                              const TextOptimizationConfig& text = {});

/// Gradient-descends the unseen-class anchors on a cross-entropy over
/// cosine / tau for the calibration embeddings, keeping the iterate with
/// the best calibration accuracy (the starting anchors unless a later step
/// strictly improves it).
align::EmbeddingBatch optimize_text_anchors(const align::EmbeddingBatch& anchors,
                                            const align::EmbeddingBatch& calibration_events,
                                            std::span<const std::size_t> calibration_labels,
                                            const TextOptimizationConfig& cfg);

struct AblationRow {
  std::string name;
  bool baseline = false;
  bool remark1 = false;  // k-NN translation against the reference pool
  bool modulation = false;
  std::vector<double> accuracies;  // one per seed
  double mean() const;
  double standard_error() const;  // sample std / sqrt(n); 0 for one seed
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;  // fixed six-row order

  const AblationRow& row(std::string_view name) const;
  std::string summary_csv() const;
  std::string runs_csv() const;
};

/// Trains the baseline, baseline+mod and mod-only encoders per seed and
/// evaluates raw and k-NN-translated accuracy:
///   baseline, baseline+remark1, baseline+mod, mod-only, mod+remark1, all.
/// Seeds run on up to `threads` workers; results do not depend on it.
AblationTable run_ablation(const SyntheticWorld& world, std::span<const std::uint64_t> seeds,
                           const TrainConfig& base, std::size_t threads = 1);

}  // namespace evalign::train
