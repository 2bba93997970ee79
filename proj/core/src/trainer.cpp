#include "evalign/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "evalign/error.hpp"
#include "evalign/random.hpp"

namespace evalign::train {

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::Baseline: return "baseline";
    case Objective::BaselineMod: return "baseline+mod";
    case Objective::ModOnly: return "mod-only";
  }
  return "unknown";
}

Objective parse_objective(std::string_view name) {
  if (name == "baseline") return Objective::Baseline;
  if (name == "baseline+mod") return Objective::BaselineMod;
  if (name == "mod-only") return Objective::ModOnly;
  throw ConfigError("unknown loss selection '" + std::string(name) + "'");
}

std::string_view to_string(EvalOption option) {
  switch (option) {
    case EvalOption::Raw: return "raw";
    case EvalOption::KnnTranslated: return "knn_translated";
    case EvalOption::OptimizedText: return "optimized_text";
  }
  return "unknown";
}

EvalOption parse_eval_option(std::string_view name) {
  if (name == "raw") return EvalOption::Raw;
  if (name == "knn_translated") return EvalOption::KnnTranslated;
  if (name == "optimized_text") return EvalOption::OptimizedText;
  throw ConfigError("unknown evaluation option '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (hidden < 1) throw ConfigError("hidden size must be positive");
  loss.validate();
}

align::LossResult objective_loss(const align::EmbeddingBatch& events,
                                 const align::EmbeddingBatch& images, Objective objective,
                                 const align::LossConfig& cfg) {
  switch (objective) {
    case Objective::Baseline: return align::baseline_loss(events, images, cfg.tau);
    case Objective::BaselineMod: return align::total_loss(events, images, cfg);
    case Objective::ModOnly:
      return align::modulation_loss(events, images, align::modulation_weights(events, cfg));
  }
  throw ArgumentError("unknown objective");
}

align::LossResult encoder_objective(const Encoder& encoder,
                                    const std::vector<std::vector<double>>& features,
                                    const align::EmbeddingBatch& images, Objective objective,
                                    const align::LossConfig& cfg) {
  Encoder::Tape tape;
  const auto raw = encoder.forward_raw(features, tape);
  align::LossResult out = objective_loss(raw, images, objective, cfg);
  out.grad = encoder.backward(tape, out.grad);
  return out;
}

double training_objective(const Encoder& encoder, const SyntheticWorld& world,
                          Objective objective, const align::LossConfig& cfg) {
  Encoder::Tape tape;
  const auto raw = encoder.forward_raw(world.features(Split::Train), tape);
  return objective_loss(raw, world.image_embeddings(Split::Train), objective, cfg).loss;
}

TrainResult train(const SyntheticWorld& world, const TrainConfig& cfg) {
  cfg.validate();
  // Unseen classes never reach the optimizer.
  for (const auto& s : world.train) {
    if (s.split != Split::Train || !world.is_train_class(s.class_id)) {
      throw ArgumentError("training split contains a sample from an unseen class");
    }
  }
  const std::size_t n = world.train.size();
  if (n < 2) throw ArgumentError("training split needs at least two samples");

  const EncoderShape shape{world.spec.feature_length(), cfg.hidden, world.spec.dim};
  Encoder encoder = Encoder::initialize(shape, derive_seed(cfg.seed, 0));
  TrainResult result{encoder, {}, 0.0, 0.0};
  result.initial_objective = training_objective(encoder, world, cfg.objective, cfg.loss);

  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::min(cfg.batch_size, n);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
    double epoch_loss = 0.0;
    std::size_t steps = 0;
    // A trailing batch smaller than two has no negatives and is skipped.
    for (std::size_t start = 0; start + 2 <= n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::vector<std::vector<double>> features;
      align::EmbeddingBatch images(align::Role::Image, world.spec.dim);
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = world.train[order[k]];
        features.push_back(s.feature);
        images.push_back(s.image_embedding);
      }
      const auto where = " at epoch " + std::to_string(epoch) + ", step " + std::to_string(steps);
      align::LossResult step;
      try {
        step = encoder_objective(encoder, features, images, cfg.objective, cfg.loss);
      } catch (const ArgumentError& e) {
        // Only reachable when the outputs overflow or collapse to zero.
        throw DivergenceError(std::string("encoder output degenerated") + where + ": " + e.what());
      }
      if (!std::isfinite(step.loss)) throw DivergenceError("loss became non-finite" + where);
      auto params = encoder.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        params[p] -= cfg.learning_rate * step.grad[p];
        if (!std::isfinite(params[p])) throw DivergenceError("parameters became non-finite" + where);
      }
      epoch_loss += step.loss;
      ++steps;
    }
    result.loss_curve.push_back(steps ? epoch_loss / static_cast<double>(steps) : 0.0);
  }
  result.encoder = std::move(encoder);
  result.final_objective = training_objective(result.encoder, world, cfg.objective, cfg.loss);
  if (!std::isfinite(result.final_objective)) throw DivergenceError("final objective is non-finite");
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

std::vector<std::size_t> local_labels(const SyntheticWorld& world, Split split) {
  std::vector<std::size_t> labels;
  for (const auto& s : world.samples(split)) labels.push_back(s.class_id - world.spec.n_train_classes);
  return labels;
}

double accuracy_of(const align::EmbeddingBatch& events, const align::EmbeddingBatch& anchors,
                   std::span<const std::size_t> labels, std::size_t* correct_out = nullptr) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (align::zero_shot_scores(events.row(i), anchors).predicted == labels[i]) ++correct;
  }
  if (correct_out) *correct_out = correct;
  return events.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(events.size());
}

}  // namespace

align::EmbeddingBatch optimize_text_anchors(const align::EmbeddingBatch& anchors,
                                            const align::EmbeddingBatch& calibration_events,
                                            std::span<const std::size_t> calibration_labels,
                                            const TextOptimizationConfig& cfg) {
  if (calibration_events.empty()) return anchors;
  if (!(cfg.tau > 0.0)) throw ConfigError("text optimization tau must be positive");
  const std::size_t n = calibration_events.size();
  const std::size_t c = anchors.size();
  const std::size_t d = anchors.dim();

  align::EmbeddingBatch current = anchors;
  align::EmbeddingBatch best = anchors;
  double best_acc = accuracy_of(calibration_events, anchors.normalized(), calibration_labels);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const align::EmbeddingBatch unit = current.normalized();
    // Cross-entropy of the calibration events over class cosines / tau.
    std::vector<double> grad_unit(c * d, 0.0);
    std::vector<double> logits(c);
    for (std::size_t i = 0; i < n; ++i) {
      const auto e = calibration_events.row(i);
      for (std::size_t k = 0; k < c; ++k) logits[k] = align::dot(e, unit.row(k)) / cfg.tau;
      const double peak = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double l : logits) z += std::exp(l - peak);
      for (std::size_t k = 0; k < c; ++k) {
        const double p = std::exp(logits[k] - peak) / z;
        const double coeff = (p - (k == calibration_labels[i] ? 1.0 : 0.0)) /
                             (cfg.tau * static_cast<double>(n));
        for (std::size_t j = 0; j < d; ++j) grad_unit[k * d + j] += coeff * e[j];
      }
    }
    for (std::size_t k = 0; k < c; ++k) {
      const auto u = unit.row(k);
      auto raw = current.row(k);
      const double r = align::norm(raw);
      std::span<double> g(grad_unit.data() + k * d, d);
      const double gu = align::dot(g, u);
      for (std::size_t j = 0; j < d; ++j) raw[j] -= cfg.learning_rate * (g[j] - gu * u[j]) / r;
    }
    const double acc = accuracy_of(calibration_events, current.normalized(), calibration_labels);
    if (acc > best_acc) {
      best_acc = acc;
      best = current;
    }
  }
  return best.normalized();
}

EvalResult evaluate_embeddings(const align::EmbeddingBatch& test_events,
                               const align::EmbeddingBatch& calibration_events,
                               const SyntheticWorld& world, EvalOption option,
                               const align::LossConfig& loss, const TextOptimizationConfig& text) {
  if (world.test.empty()) throw ArgumentError("test split is empty");
  if (test_events.size() != world.test.size()) throw ArgumentError("one embedding per test sample");
  const auto labels = local_labels(world, Split::Test);
  align::EmbeddingBatch anchors = world.test_anchors();
  align::EmbeddingBatch queries = test_events;

  switch (option) {
    case EvalOption::Raw: break;
    case EvalOption::KnnTranslated: {
      const std::size_t k = std::min(loss.knn_k, world.reference_pool.size());
      align::EmbeddingBatch translated(align::Role::Event, test_events.dim());
      for (std::size_t i = 0; i < test_events.size(); ++i) {
        translated.push_back(align::knn_translate(test_events.row(i), world.reference_pool, k));
      }
      queries = std::move(translated);
      break;
    }
    case EvalOption::OptimizedText: {
      if (calibration_events.size() != world.calibration.size()) {
        throw ArgumentError("one embedding per calibration sample");
      }
      anchors = optimize_text_anchors(anchors, calibration_events,
                                      local_labels(world, Split::Calibration), text);
      break;
    }
  }
  EvalResult r;
  r.total = queries.size();
  r.accuracy = accuracy_of(queries, anchors, labels, &r.correct);
  return r;
}

EvalResult evaluate_zero_shot(const Encoder& encoder, const SyntheticWorld& world,
                              EvalOption option, const align::LossConfig& loss,
                              const TextOptimizationConfig& text) {
  const auto test_events = encoder.encode(world.features(Split::Test));
  align::EmbeddingBatch calibration(align::Role::Event, world.spec.dim);
  if (option == EvalOption::OptimizedText && !world.calibration.empty()) {
    calibration = encoder.encode(world.features(Split::Calibration));
  }
  return evaluate_embeddings(test_events, calibration, world, option, loss, text);
}

// ---------------------------------------------------------------------------
// Ablation

double AblationRow::mean() const {
  if (accuracies.empty()) return 0.0;
  return std::accumulate(accuracies.begin(), accuracies.end(), 0.0) /
         static_cast<double>(accuracies.size());
}

double AblationRow::standard_error() const {
  const std::size_t n = accuracies.size();
  if (n < 2) return 0.0;
  const double m = mean();
  double ss = 0.0;
  for (double a : accuracies) ss += (a - m) * (a - m);
  return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

const AblationRow& AblationTable::row(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw ArgumentError("no ablation row named '" + std::string(name) + "'");
}

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string AblationTable::summary_csv() const {
  std::string out = "config,l_baseline,remark1,scalar_modulation,mean_accuracy,stderr,n_seeds\n";
  for (const auto& r : rows) {
    out += r.name + "," + (r.baseline ? "1" : "0") + "," + (r.remark1 ? "1" : "0") + "," +
           (r.modulation ? "1" : "0") + "," + fmt(r.mean()) + "," + fmt(r.standard_error()) + "," +
           std::to_string(r.accuracies.size()) + "\n";
  }
  return out;
}

std::string AblationTable::runs_csv() const {
  std::string out = "config,seed,accuracy\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.accuracies.size(); ++i) {
      out += r.name + "," + std::to_string(seeds[i]) + "," + fmt(r.accuracies[i]) + "\n";
    }
  }
  return out;
}

AblationTable run_ablation(const SyntheticWorld& world, std::span<const std::uint64_t> seeds,
                           const TrainConfig& base, std::size_t threads) {
  base.validate();
  if (seeds.empty()) throw ArgumentError("ablation needs at least one seed");

  const Objective objectives[] = {Objective::Baseline, Objective::BaselineMod, Objective::ModOnly};
  // [seed][objective] -> (raw, knn)
  struct Cell {
    double raw = 0.0;
    double knn = 0.0;
  };
  std::vector<Cell> cells(seeds.size() * 3);

  auto run_cell = [&](std::size_t idx) {
    const std::size_t s = idx / 3;
    TrainConfig cfg = base;
    cfg.seed = seeds[s];
    cfg.objective = objectives[idx % 3];
    const auto trained = train(world, cfg);
    const auto test_events = trained.encoder.encode(world.features(Split::Test));
    const align::EmbeddingBatch none(align::Role::Event, world.spec.dim);
    cells[idx].raw = evaluate_embeddings(test_events, none, world, EvalOption::Raw, cfg.loss).accuracy;
    cells[idx].knn =
        evaluate_embeddings(test_events, none, world, EvalOption::KnnTranslated, cfg.loss).accuracy;
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, cells.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = w; i < cells.size(); i += workers) run_cell(i);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  AblationTable table;
  table.seeds.assign(seeds.begin(), seeds.end());
  table.rows = {
      {"baseline", true, false, false, {}},
      {"baseline+remark1", true, true, false, {}},
      {"baseline+mod", true, false, true, {}},
      {"mod-only", false, false, true, {}},
      {"mod+remark1", false, true, true, {}},
      {"all", true, true, true, {}},
  };
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const Cell& b = cells[s * 3 + 0];
    const Cell& bm = cells[s * 3 + 1];
    const Cell& m = cells[s * 3 + 2];
    table.rows[0].accuracies.push_back(b.raw);
    table.rows[1].accuracies.push_back(b.knn);
    table.rows[2].accuracies.push_back(bm.raw);
    table.rows[3].accuracies.push_back(m.raw);
    table.rows[4].accuracies.push_back(m.knn);
    table.rows[5].accuracies.push_back(bm.knn);
  }
  return table;
}

}  // namespace evalign::train
