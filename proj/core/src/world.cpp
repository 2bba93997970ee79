#include "evalign/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "evalign/error.hpp"
#include "evalign/event_repr.hpp"
#include "evalign/random.hpp"

namespace evalign::train {

namespace fs = std::filesystem;

void WorldSpec::validate() const {
  if (n_train_classes + n_test_classes < 4) throw ConfigError("world needs at least 4 classes");
  if (n_train_classes < 1 || n_test_classes < 1) {
    throw ConfigError("world needs at least one training and one unseen class");
  }
  if (dim < 8) throw ConfigError("world embedding dimension must be at least 8");
  if (train_per_class < 1 || test_per_class < 1) throw ConfigError("empty train or test split");
  if (pool_per_class < 1) throw ConfigError("reference pool must be non-empty");
  if (!(sigma_img >= 0.0)) throw ConfigError("sigma_img must be non-negative");
  if (image_subspace_dim == 1) throw ConfigError("image subspace needs at least two dimensions");
  if (image_size < 4 || image_size > 4096) throw ConfigError("image_size out of range");
  if (feature_size < 1) throw ConfigError("feature_size must be positive");
  if (!(texture_period > 0.0)) throw ConfigError("texture_period must be positive");
  motion.validate();
  emitter.validate();
}

align::EmbeddingBatch SyntheticWorld::test_anchors() const {
  std::vector<std::size_t> ids;
  for (std::size_t c = spec.n_train_classes; c < spec.n_classes(); ++c) ids.push_back(c);
  return anchors.select(ids);
}

const std::vector<Sample>& SyntheticWorld::samples(Split split) const {
  switch (split) {
    case Split::Train: return train;
    case Split::Calibration: return calibration;
    case Split::Test: return test;
  }
  return train;
}

std::vector<std::vector<double>> SyntheticWorld::features(Split split) const {
  std::vector<std::vector<double>> out;
  for (const auto& s : samples(split)) out.push_back(s.feature);
  return out;
}

align::EmbeddingBatch SyntheticWorld::image_embeddings(Split split) const {
  align::EmbeddingBatch out(align::Role::Image, spec.dim);
  for (const auto& s : samples(split)) out.push_back(s.image_embedding);
  return out;
}

ImageGray render_embedding_image(std::span<const double> embedding, const WorldSpec& spec) {
  const std::size_t dim = embedding.size();
  const auto grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dim))));
  const std::size_t size = spec.image_size;
  const double cell = static_cast<double>(size) / static_cast<double>(grid);
  const double k = 2.0 * std::numbers::pi / spec.texture_period;
  ImageGray img(size, size, 0.5f);
  for (std::size_t y = 0; y < size; ++y) {
    const auto gy = std::min(grid - 1, static_cast<std::size_t>(static_cast<double>(y) / cell));
    for (std::size_t x = 0; x < size; ++x) {
      const auto gx = std::min(grid - 1, static_cast<std::size_t>(static_cast<double>(x) / cell));
      const std::size_t coord = gy * grid + gx;
      if (coord >= dim) continue;
      const double contrast = 0.45 * (0.5 + 0.5 * std::tanh(spec.texture_gain * embedding[coord]));
      const double texture = std::cos(k * static_cast<double>(x)) * std::cos(k * static_cast<double>(y));
      img.at(x, y) = static_cast<float>(0.5 + contrast * texture);
    }
  }
  return img;
}

namespace {

align::EmbeddingBatch make_anchors(std::size_t n_classes, std::size_t dim, Rng& rng) {
  // Modified Gram-Schmidt on Gaussian columns: the Q factor of a QR.
  std::vector<align::Embedding> rows;
  for (std::size_t c = 0; c < n_classes; ++c) {
    align::Embedding v(dim);
    for (double& x : v) x = rng.normal();
    if (c < dim) {
      for (const auto& q : rows) {
        const double p = align::dot(v, q);
        for (std::size_t i = 0; i < dim; ++i) v[i] -= p * q[i];
      }
    }
    rows.push_back(align::normalized(v));
  }
  return align::EmbeddingBatch::from_rows(align::Role::Text, rows);
}

align::Embedding perturb(std::span<const double> anchor, double sigma, std::size_t image_dims,
                         Rng& rng) {
  if (sigma == 0.0 && image_dims == anchor.size()) return {anchor.begin(), anchor.end()};
  align::Embedding v(anchor.size(), 0.0);
  for (std::size_t i = 0; i < image_dims; ++i) v[i] = anchor[i] + sigma * rng.normal();
  return align::normalized(v);
}

bool nearest_is_own(const align::EmbeddingBatch& anchors, std::span<const double> emb,
                    std::size_t cls) {
  return align::zero_shot_scores(emb, anchors).predicted == cls;
}

struct Job {
  Split split;
  std::size_t class_id;
  std::uint64_t seed;
};

Sample make_sample(const Job& job, const align::EmbeddingBatch& anchors, const WorldSpec& spec) {
  Rng rng(job.seed);
  Sample s;
  s.split = job.split;
  s.class_id = job.class_id;
  s.image_embedding = perturb(anchors.row(job.class_id), spec.sigma_img, spec.image_dims(), rng);
  s.motion = motion::sample_motion(derive_seed(job.seed, 1), spec.motion);
  const ImageGray img = render_embedding_image(
      std::span<const double>(s.image_embedding).first(spec.image_dims()), spec);
  const auto seq = motion::render_sequence(img, s.motion);
  events::EmitterConfig emitter = spec.emitter;
  emitter.seed = derive_seed(job.seed, 2);
  s.events = events::emit(seq, emitter);
  s.feature = repr::frame_to_feature(repr::to_event_frame(s.events), spec.feature_size,
                                     spec.feature_size);
  return s;
}

std::optional<SyntheticWorld> try_generate(const WorldSpec& spec, std::uint64_t attempt_seed,
                                           std::size_t threads) {
  Rng rng(attempt_seed);
  SyntheticWorld world;
  world.spec = spec;
  world.anchors = make_anchors(spec.n_classes(), spec.dim, rng);

  std::vector<Job> jobs;
  std::uint64_t counter = 0;
  auto add_jobs = [&](Split split, std::size_t first_class, std::size_t last_class,
                      std::size_t per_class) {
    for (std::size_t c = first_class; c < last_class; ++c) {
      for (std::size_t i = 0; i < per_class; ++i) {
        jobs.push_back({split, c, derive_seed(attempt_seed, counter++)});
      }
    }
  };
  add_jobs(Split::Train, 0, spec.n_train_classes, spec.train_per_class);
  add_jobs(Split::Calibration, spec.n_train_classes, spec.n_classes(), spec.calibration_per_class);
  add_jobs(Split::Test, spec.n_train_classes, spec.n_classes(), spec.test_per_class);

  world.reference_pool = align::EmbeddingBatch(align::Role::Image, spec.dim);
  for (std::size_t c = spec.n_train_classes; c < spec.n_classes(); ++c) {
    for (std::size_t i = 0; i < spec.pool_per_class; ++i) {
      Rng pool_rng(derive_seed(attempt_seed, counter++));
      const auto emb = perturb(world.anchors.row(c), spec.sigma_img, spec.image_dims(), pool_rng);
      if (!nearest_is_own(world.anchors, emb, c)) return std::nullopt;
      world.reference_pool.push_back(emb);
      world.pool_class_ids.push_back(c);
    }
  }

  std::vector<Sample> samples(jobs.size());
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, jobs.size()));
  auto run = [&](std::size_t w) {
    for (std::size_t j = w; j < jobs.size(); j += workers) {
      samples[j] = make_sample(jobs[j], world.anchors, spec);
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }

  for (auto& s : samples) {
    if (!nearest_is_own(world.anchors, s.image_embedding, s.class_id)) return std::nullopt;
    switch (s.split) {
      case Split::Train: world.train.push_back(std::move(s)); break;
      case Split::Calibration: world.calibration.push_back(std::move(s)); break;
      case Split::Test: world.test.push_back(std::move(s)); break;
    }
  }
  return world;
}

std::string spec_json(const WorldSpec& spec) {
  using nlohmann::json;
  const auto& m = spec.motion;
  const auto& e = spec.emitter;
  json doc = {
      {"n_train_classes", spec.n_train_classes},
      {"n_test_classes", spec.n_test_classes},
      {"dim", spec.dim},
      {"train_per_class", spec.train_per_class},
      {"calibration_per_class", spec.calibration_per_class},
      {"test_per_class", spec.test_per_class},
      {"pool_per_class", spec.pool_per_class},
      {"sigma_img", spec.sigma_img},
      {"image_subspace_dim", spec.image_subspace_dim},
      {"image_size", spec.image_size},
      {"feature_size", spec.feature_size},
      {"texture_gain", spec.texture_gain},
      {"texture_period", spec.texture_period},
      {"motion",
       {{"dx", {m.dx.min, m.dx.max}},
        {"dy", {m.dy.min, m.dy.max}},
        {"scale_end", {m.scale_end.min, m.scale_end.max}},
        {"angle_end", {m.angle_end.min, m.angle_end.max}},
        {"duration", m.duration},
        {"n_frames", m.n_frames},
        {"kind", m.forced_kind ? std::string(motion::to_string(*m.forced_kind)) : "random"}}},
      {"emitter",
       {{"theta_pos", e.theta_pos},
        {"theta_neg", e.theta_neg},
        {"log_eps", e.log_eps},
        {"refractory", e.refractory},
        {"threshold_noise_sigma", e.threshold_noise_sigma}}},
  };
  return doc.dump();
}

std::string split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Calibration: return "calibration";
    case Split::Test: return "test";
  }
  return "unknown";
}

}  // namespace

SyntheticWorld generate_world(const WorldSpec& spec, std::size_t threads) {
  spec.validate();
  constexpr std::size_t kMaxAttempts = 5;
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t attempt_seed = attempt == 0 ? spec.seed : derive_seed(spec.seed, attempt);
    if (auto world = try_generate(spec, attempt_seed, threads)) {
      world->attempts = attempt + 1;
      return std::move(*world);
    }
  }
  throw ConfigError("sigma_img too large: image embeddings kept landing nearer a foreign anchor");
}

io::Manifest world_manifest(const SyntheticWorld& world) {
  io::Manifest m;
  m.dataset = "synthetic-world";
  m.seed = world.spec.seed;
  m.config_json = spec_json(world.spec);
  std::size_t row = 0;
  for (Split split : {Split::Train, Split::Calibration, Split::Test}) {
    const auto& list = world.samples(split);
    for (std::size_t i = 0; i < list.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "events/%s_%05zu.evz", split_name(split).c_str(), i);
      io::ManifestEntry e;
      e.event_file = name;
      e.source_image = "procedural:" + split_name(split) + "/" + std::to_string(i);
      e.class_id = list[i].class_id;
      e.class_name = "class_" + std::to_string(list[i].class_id);
      e.image_embedding = io::EmbeddingRef{"image_embeddings.emb", row++};
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

io::Manifest write_world(const SyntheticWorld& world, const fs::path& dir) {
  fs::create_directories(dir / "events");
  const io::Manifest manifest = world_manifest(world);
  align::EmbeddingBatch images(align::Role::Image, world.spec.dim);
  std::size_t k = 0;
  for (Split split : {Split::Train, Split::Calibration, Split::Test}) {
    for (const auto& s : world.samples(split)) {
      io::write_events(s.events, dir / manifest.entries[k++].event_file);
      images.push_back(s.image_embedding);
    }
  }
  io::write_embeddings(images, dir / "image_embeddings.emb");
  io::write_embeddings(world.anchors, dir / "text_anchors.emb");
  io::write_manifest(manifest, dir / "manifest.json");
  return manifest;
}

}  // namespace evalign::train
