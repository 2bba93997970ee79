#pragma once

#include <cstddef>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "evalign/alignment.hpp"
#include "evalign/dataset_io.hpp"
#include "evalign/emitter.hpp"
#include "evalign/motion.hpp"

namespace evalign::train {

/// Parameters of the synthetic stand-in for an aligned image/text space.
struct WorldSpec {
  std::size_t n_train_classes = 10;
  std::size_t n_test_classes = 5;
  std::size_t dim = 16;
  std::size_t train_per_class = 40;
  std::size_t calibration_per_class = 10;
  std::size_t test_per_class = 30;
  std::size_t pool_per_class = 20;  // reference image embeddings, no events
  double sigma_img = 0.1;
  // Image embeddings live in the first `image_subspace_dim` coordinates
  // (0 = all of them); text anchors span the full space.
  std::size_t image_subspace_dim = 12;
  std::size_t image_size = 32;      // rendered frames are image_size^2
  std::size_t feature_size = 8;     // event frames resized to feature_size^2
  double texture_gain = 3.0;
  double texture_period = 4.0;      // pixels
  motion::MotionRanges motion{{-3.0, 3.0}, {-3.0, 3.0}, {0.9, 1.1}, {-0.15, 0.15}, 0.05, 8, {}};
  events::EmitterConfig emitter{};
  std::uint64_t seed = 2024;

  std::size_t n_classes() const { return n_train_classes + n_test_classes; }
  std::size_t feature_length() const { return 2 * feature_size * feature_size; }
  std::size_t image_dims() const {
    return image_subspace_dim == 0 ? dim : std::min(image_subspace_dim, dim);
  }
  void validate() const;  // throws ConfigError
};

enum class Split : std::uint8_t { Train, Calibration, Test };

struct Sample {
  Split split = Split::Train;
  std::size_t class_id = 0;
  align::Embedding image_embedding;
  motion::MotionSpec motion;
  events::EventStream events;
  std::vector<double> feature;
};

/// Classes [0, n_train) are seen in training; [n_train, n_classes) only at
/// evaluation. Calibration and test samples both come from the unseen
/// classes and are disjoint draws.
struct SyntheticWorld {
  WorldSpec spec;
  align::EmbeddingBatch anchors{align::Role::Text, 1};  // one per class
  std::vector<Sample> train;
  std::vector<Sample> calibration;
  std::vector<Sample> test;
  align::EmbeddingBatch reference_pool{align::Role::Image, 1};
  std::vector<std::size_t> pool_class_ids;
  std::size_t attempts = 1;  // generations needed to satisfy the nearest-anchor check

  bool is_train_class(std::size_t c) const { return c < spec.n_train_classes; }
  /// Text anchors of the unseen classes, in class-id order.
  align::EmbeddingBatch test_anchors() const;
  std::vector<std::vector<double>> features(Split split) const;
  align::EmbeddingBatch image_embeddings(Split split) const;
  const std::vector<Sample>& samples(Split split) const;
};

/// Procedural image for an image embedding: a grid of textured cells, one
/// per coordinate, whose texture contrast grows with the coordinate value.
ImageGray render_embedding_image(std::span<const double> embedding, const WorldSpec& spec);

/// Deterministic in `spec.seed`. Anchors are orthonormalized Gaussian
/// vectors (beyond `dim` classes they are just normalized). Image
/// embeddings are normalize(P anchor + sigma_img * P noise), P the
/// projection onto the image subspace, and must each be nearest to their
/// own anchor; up to five generations are attempted before ConfigError.
SyntheticWorld generate_world(const WorldSpec& spec, std::size_t threads = 1);

/// Writes events/<split>_<index>.evz, image_embeddings.emb, text_anchors.emb
/// and manifest.json under `dir`, and returns the manifest. Manifest
/// entries follow train, calibration, test order; embedding rows match.
io::Manifest write_world(const SyntheticWorld& world, const std::filesystem::path& dir);

/// The manifest `write_world` would produce, without touching disk.
io::Manifest world_manifest(const SyntheticWorld& world);

}  // namespace evalign::train
