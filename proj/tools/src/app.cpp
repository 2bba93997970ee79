#include "evalign_tools/app.hpp"

#include <CLI11.hpp>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <ostream>
#include <thread>

#include "evalign/alignment.hpp"
#include "evalign/dataset_io.hpp"
#include "evalign/emitter.hpp"
#include "evalign/encoder.hpp"
#include "evalign/error.hpp"
#include "evalign/event_repr.hpp"
#include "evalign/image.hpp"
#include "evalign/motion.hpp"
#include "evalign/random.hpp"
#include "evalign/trainer.hpp"
#include "evalign/world.hpp"
#include "evalign_tools/run_config.hpp"

namespace evalign::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
// exception (by index) is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Options every subcommand accepts.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> out;
  bool print_config = false;
};

void add_common(CLI::App& app, Common& c, const std::string& out_help) {
  app.add_option("--config", c.config, "JSON run config; flags override its values")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", c.seed, "Global seed driving every random draw");
  app.add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  app.add_option("--out", c.out, out_help);
  app.add_flag("--print-config", c.print_config,
               "Print the effective config as JSON and exit");
}

RunConfig base_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (c.out) cfg.paths.out = *c.out;
  return cfg;
}

void log_line(std::ostream& err, const std::string& msg) { err << "evalign: " << msg << '\n'; }

// ---------------------------------------------------------------- synth

struct SourceImage {
  fs::path path;
  std::string relative;
  std::string class_name;
};

// Supported images directly in `dir` form the class "unlabeled"; images in
// each immediate subdirectory form a class named after it.
std::vector<SourceImage> collect_images(const fs::path& dir, std::ostream& err) {
  std::vector<SourceImage> found;
  auto scan = [&](const fs::path& d, const std::string& cls) {
    for (const auto& entry : fs::directory_iterator(d)) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), dir).generic_string();
      if (!is_supported_image(entry.path())) {
        log_line(err, "skipping unsupported file " + rel);
        continue;
      }
      found.push_back({entry.path(), rel, cls});
    }
  };
  scan(dir, "unlabeled");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) scan(entry.path(), entry.path().filename().string());
  }
  std::sort(found.begin(), found.end(),
            [](const SourceImage& a, const SourceImage& b) { return a.relative < b.relative; });
  return found;
}

std::string synth_config_json(const RunConfig& cfg) {
  const json full = json::parse(run_config_json(cfg));
  json doc = {{"seed", full["seed"]}, {"motion", full["motion"]}, {"emitter", full["emitter"]}};
  return doc.dump();
}

int cmd_synth(const RunConfig& cfg, std::ostream& err) {
  if (cfg.paths.input.empty()) throw ConfigError("synth needs --input");
  const fs::path input(cfg.paths.input);
  if (!fs::is_directory(input)) throw IoError("input directory not found: " + input.string());
  const fs::path out(cfg.paths.out);
  const auto sources = collect_images(input, err);
  const std::size_t workers = cfg.worker_count();

  std::vector<ImageGray> images(sources.size());
  std::vector<std::string> failures(sources.size());
  parallel_for(sources.size(), workers, [&](std::size_t i) {
    try {
      images[i] = load_image(sources[i].path);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  bool failed = false;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (failures[i].empty()) continue;
    log_line(err, "cannot read " + sources[i].relative + ": " + failures[i]);
    failed = true;
  }
  if (failed) return kExitInput;

  std::map<std::string, std::size_t> class_ids;
  for (const auto& s : sources) class_ids.emplace(s.class_name, 0);
  std::size_t next_id = 0;
  for (auto& [name, id] : class_ids) id = next_id++;

  fs::create_directories(out / "events");
  io::Manifest manifest;
  manifest.dataset = "synth";
  manifest.seed = cfg.seed;
  manifest.config_json = synth_config_json(cfg);
  manifest.entries.resize(sources.size());
  std::vector<std::size_t> counts(sources.size());

  const auto& ranges = cfg.world.motion;
  parallel_for(sources.size(), workers, [&](std::size_t i) {
    const std::uint64_t image_seed = derive_seed(cfg.seed, i);
    const auto spec = motion::sample_motion(derive_seed(image_seed, 1), ranges);
    const auto seq = motion::render_sequence(images[i], spec);
    events::EmitterConfig emitter = cfg.world.emitter;
    emitter.seed = derive_seed(image_seed, 2);
    const auto stream = events::emit(seq, emitter);
    char name[32];
    std::snprintf(name, sizeof(name), "events/%05zu.evz", i);
    io::write_events(stream, out / name);
    counts[i] = stream.events.size();

    auto& entry = manifest.entries[i];
    entry.event_file = name;
    entry.source_image = sources[i].relative;
    entry.class_name = sources[i].class_name;
    entry.class_id = class_ids.at(sources[i].class_name);
  });
  io::write_manifest(manifest, out / "manifest.json");

  std::size_t total = 0;
  for (auto c : counts) total += c;
  log_line(err, "synth: " + std::to_string(sources.size()) + " images, " + std::to_string(total) +
                    " events -> " + out.string());
  return kExitOk;
}

// ---------------------------------------------------------------- world / train / eval / ablate

train::SyntheticWorld build_world(const RunConfig& cfg, std::ostream& err) {
  auto world = train::generate_world(cfg.world_spec(), cfg.worker_count());
  log_line(err, "world: " + std::to_string(world.train.size()) + " train, " +
                    std::to_string(world.test.size()) + " test samples (seed " +
                    std::to_string(cfg.seed) + ")");
  return world;
}

int cmd_world(const RunConfig& cfg, std::ostream& err) {
  const auto world = build_world(cfg, err);
  train::write_world(world, cfg.paths.out);
  log_line(err, "world written to " + cfg.paths.out);
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& err) {
  const auto world = build_world(cfg, err);
  const auto result = train::train(world, cfg.train);
  const fs::path out(cfg.paths.out);
  fs::create_directories(out);
  train::write_encoder(result.encoder, out / "encoder.enc");

  std::string curve = "epoch,loss\n";
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    curve += std::to_string(i + 1) + "," + format_double(result.loss_curve[i]) + "\n";
  }
  write_text(out / "loss_curve.csv", curve);

  json run = {{"command", "train"},
              {"objective", train::to_string(cfg.train.objective)},
              {"epochs", cfg.train.epochs},
              {"initial_objective", result.initial_objective},
              {"final_objective", result.final_objective},
              {"world_attempts", world.attempts},
              {"encoder", "encoder.enc"},
              {"config", json::parse(run_config_json(cfg))}};
  write_text(out / "run.json", run.dump(2) + "\n");
  log_line(err, "train: objective " + format_double(result.initial_objective) + " -> " +
                    format_double(result.final_objective));
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& err) {
  if (cfg.paths.encoder.empty()) throw ConfigError("eval needs --encoder");
  const auto encoder = train::read_encoder(cfg.paths.encoder);
  const auto world = build_world(cfg, err);
  const auto spec = cfg.world_spec();
  if (encoder.shape().input != spec.feature_length() || encoder.shape().output != spec.dim) {
    throw ArgumentError("encoder shape does not match the configured world");
  }
  const auto result =
      train::evaluate_zero_shot(encoder, world, cfg.eval_option, cfg.train.loss, cfg.text);
  json doc = {{"command", "eval"},
              {"option", train::to_string(cfg.eval_option)},
              {"accuracy", result.accuracy},
              {"correct", result.correct},
              {"total", result.total},
              {"world_seed", cfg.seed}};
  const fs::path out(cfg.paths.out);
  write_text(out / "eval.json", doc.dump(2) + "\n");
  log_line(err, "eval " + std::string(train::to_string(cfg.eval_option)) + ": accuracy " +
                    format_double(result.accuracy));
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& err) {
  const auto world = build_world(cfg, err);
  const auto table = train::run_ablation(world, cfg.ablation_seeds, cfg.train, cfg.worker_count());
  const fs::path out(cfg.paths.out);
  write_text(out / "ablation_summary.csv", table.summary_csv());
  write_text(out / "ablation_runs.csv", table.runs_csv());
  for (const auto& row : table.rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-18s %.4f +- %.4f", row.name.c_str(), row.mean(),
                  row.standard_error());
    log_line(err, line);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- analyze / witness

struct AnalyzeOptions {
  std::string events;
  std::string embeddings;
  std::size_t bins = 50;
  std::string density;
  std::string render;
};

int cmd_analyze(const RunConfig& cfg, const AnalyzeOptions& opt, std::ostream& err) {
  const fs::path out(cfg.paths.out);
  if (!opt.embeddings.empty()) {
    if (!opt.render.empty()) throw ArgumentError("--render applies to --events input");
    const auto batch = io::read_embeddings(opt.embeddings);
    const auto hist = align::similarity_density(batch, opt.bins);
    const fs::path path = opt.density.empty() ? out / "density.csv" : fs::path(opt.density);
    write_text(path, align::density_csv(hist));
    log_line(err, "density of " + std::to_string(batch.size()) + " embeddings -> " +
                      path.string());
    return kExitOk;
  }
  if (!opt.density.empty()) throw ArgumentError("--density applies to --embeddings input");
  const auto stream = io::read_events(opt.events);
  const auto frame = repr::to_event_frame(stream);
  const fs::path path = opt.render.empty() ? out / "events.png" : fs::path(opt.render);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_rgb(repr::render_rgb(frame), path);
  log_line(err, "rendered " + std::to_string(stream.events.size()) + " events -> " +
                    path.string());
  return kExitOk;
}

int cmd_witness(const RunConfig& cfg, std::size_t dim, std::ostream& err) {
  const auto witness = align::lemma1_witness(dim);
  const fs::path path = fs::path(cfg.paths.out) / "witness.json";
  write_text(path, align::witness_report_json(witness));
  log_line(err, "witness min margin " + format_double(witness.min_margin()));
  return witness.min_margin() > 0.0 ? kExitOk : kExitRuntime;
}

int classify(const std::exception_ptr& ep, std::ostream& err) {
  try {
    std::rethrow_exception(ep);
  } catch (const DivergenceError& e) {
    log_line(err, std::string("error: ") + e.what());
    return kExitRuntime;
  } catch (const std::invalid_argument& e) {  // ConfigError, ArgumentError
    log_line(err, std::string("error: ") + e.what());
    return kExitInput;
  } catch (const FormatError& e) {
    log_line(err, std::string("error: ") + e.what());
    return kExitInput;
  } catch (const IntegrityError& e) {
    log_line(err, std::string("error: ") + e.what());
    return kExitInput;
  } catch (const IoError& e) {
    log_line(err, std::string("error: ") + e.what());
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    log_line(err, std::string("error: ") + e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    log_line(err, std::string("error: ") + e.what());
    return kExitRuntime;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Event-camera embedding alignment toolkit"};
  app.require_subcommand(0, 1);
  Common top;
  app.add_option("--config", top.config, "JSON run config")->check(CLI::ExistingFile);
  app.add_flag("--print-config", top.print_config, "Print the effective config as JSON and exit");

  // synth
  Common synth_c;
  std::optional<std::string> input, motion_kind;
  std::optional<std::size_t> frames;
  std::optional<double> duration_ms, theta;
  auto* synth = app.add_subcommand("synth", "Convert a directory of images into event files");
  add_common(*synth, synth_c, "Output directory");
  synth->add_option("--input", input, "Directory of PGM/PNG images (class subdirectories allowed)");
  synth->add_option("--motion", motion_kind, "translation | scaling | rotation | random")
      ->check(CLI::IsMember({"translation", "scaling", "rotation", "random"}));
  synth->add_option("--frames", frames, "Frames per motion sequence");
  synth->add_option("--duration-ms", duration_ms, "Motion duration in milliseconds");
  synth->add_option("--theta", theta, "Contrast threshold for both polarities (log units)");

  // world
  Common world_c;
  auto* world = app.add_subcommand("world", "Write the synthetic paired world to disk");
  add_common(*world, world_c, "Output directory");

  // train
  Common train_c;
  std::optional<std::string> objective;
  std::optional<std::size_t> epochs, batch, hidden;
  std::optional<double> lr, tau;
  std::optional<std::uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "Train an event encoder on the synthetic world");
  add_common(*train_cmd, train_c, "Output directory");
  train_cmd->add_option("--objective", objective, "baseline | baseline+mod | mod-only");
  train_cmd->add_option("--epochs", epochs, "Training epochs");
  train_cmd->add_option("--batch-size", batch, "Mini-batch size");
  train_cmd->add_option("--lr", lr, "SGD step size");
  train_cmd->add_option("--hidden", hidden, "Hidden layer width");
  train_cmd->add_option("--train-seed", train_seed, "Encoder initialization and shuffle seed");
  train_cmd->add_option("--tau", tau, "InfoNCE temperature");

  // eval
  Common eval_c;
  std::optional<std::string> encoder_path, option;
  std::optional<std::size_t> knn_k;
  auto* eval = app.add_subcommand("eval", "Zero-shot accuracy of a trained encoder");
  add_common(*eval, eval_c, "Output directory");
  eval->add_option("--encoder", encoder_path, "Encoder file written by train");
  eval->add_option("--option", option, "raw | knn_translated | optimized_text");
  eval->add_option("--knn-k", knn_k, "Neighbours used by knn_translated");

  // ablate
  Common ablate_c;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::size_t> ablate_epochs;
  auto* ablate = app.add_subcommand("ablate", "Run the six-row ablation over several seeds");
  add_common(*ablate, ablate_c, "Output directory");
  ablate->add_option("--seeds", seeds, "Training seeds")->delimiter(',');
  ablate->add_option("--epochs", ablate_epochs, "Training epochs per run");

  // analyze
  Common analyze_c;
  AnalyzeOptions analyze_opt;
  auto* analyze = app.add_subcommand("analyze", "Similarity density or event-frame rendering");
  add_common(*analyze, analyze_c, "Default output directory");
  auto* ev_opt = analyze->add_option("--events", analyze_opt.events, "Event file")
                     ->check(CLI::ExistingFile);
  auto* emb_opt = analyze->add_option("--embeddings", analyze_opt.embeddings, "Embedding file")
                      ->check(CLI::ExistingFile);
  ev_opt->excludes(emb_opt);
  analyze->add_option("--density-bins", analyze_opt.bins, "Histogram bins over [-1, 1]")
      ->check(CLI::PositiveNumber);
  analyze->add_option("--density", analyze_opt.density, "Density CSV path");
  analyze->add_option("--render", analyze_opt.render, "Rendered frame path (.png or .ppm)");

  // witness
  Common witness_c;
  std::size_t witness_dim = 4;
  auto* witness = app.add_subcommand("witness", "Write the misalignment witness report");
  add_common(*witness, witness_c, "Output directory");
  witness->add_option("--dim", witness_dim, "Embedding dimension (>= 4)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    auto finish = [&](const RunConfig& cfg, bool print, auto&& run) -> int {
      cfg.validate();
      if (print) {
        out << run_config_json(cfg);
        return kExitOk;
      }
      return run(cfg);
    };

    if (synth->parsed()) {
      RunConfig cfg = base_config(synth_c);
      if (input) cfg.paths.input = *input;
      if (motion_kind) {
        if (*motion_kind == "random") {
          cfg.world.motion.forced_kind.reset();
        } else {
          cfg.world.motion.forced_kind = motion::parse_motion_kind(*motion_kind);
        }
      }
      if (frames) cfg.world.motion.n_frames = *frames;
      if (duration_ms) cfg.world.motion.duration = *duration_ms / 1000.0;
      if (theta) cfg.world.emitter.theta_pos = cfg.world.emitter.theta_neg = *theta;
      return finish(cfg, synth_c.print_config, [&](const RunConfig& c) { return cmd_synth(c, err); });
    }
    if (world->parsed()) {
      return finish(base_config(world_c), world_c.print_config,
                    [&](const RunConfig& c) { return cmd_world(c, err); });
    }
    if (train_cmd->parsed()) {
      RunConfig cfg = base_config(train_c);
      if (objective) cfg.train.objective = train::parse_objective(*objective);
      if (epochs) cfg.train.epochs = *epochs;
      if (batch) cfg.train.batch_size = *batch;
      if (lr) cfg.train.learning_rate = *lr;
      if (hidden) cfg.train.hidden = *hidden;
      if (train_seed) cfg.train.seed = *train_seed;
      if (tau) cfg.train.loss.tau = *tau;
      return finish(cfg, train_c.print_config, [&](const RunConfig& c) { return cmd_train(c, err); });
    }
    if (eval->parsed()) {
      RunConfig cfg = base_config(eval_c);
      if (encoder_path) cfg.paths.encoder = *encoder_path;
      if (option) cfg.eval_option = train::parse_eval_option(*option);
      if (knn_k) cfg.train.loss.knn_k = *knn_k;
      return finish(cfg, eval_c.print_config, [&](const RunConfig& c) { return cmd_eval(c, err); });
    }
    if (ablate->parsed()) {
      RunConfig cfg = base_config(ablate_c);
      if (seeds) cfg.ablation_seeds = *seeds;
      if (ablate_epochs) cfg.train.epochs = *ablate_epochs;
      return finish(cfg, ablate_c.print_config,
                    [&](const RunConfig& c) { return cmd_ablate(c, err); });
    }
    if (analyze->parsed()) {
      RunConfig cfg = base_config(analyze_c);
      if (!analyze_c.print_config && analyze_opt.events.empty() && analyze_opt.embeddings.empty()) {
        throw ArgumentError("analyze needs --events or --embeddings");
      }
      return finish(cfg, analyze_c.print_config,
                    [&](const RunConfig& c) { return cmd_analyze(c, analyze_opt, err); });
    }
    if (witness->parsed()) {
      return finish(base_config(witness_c), witness_c.print_config,
                    [&](const RunConfig& c) { return cmd_witness(c, witness_dim, err); });
    }
    if (top.print_config) {
      return finish(base_config(top), true, [](const RunConfig&) { return kExitOk; });
    }
    err << app.help();
    return kExitInput;
  } catch (...) {
    return classify(std::current_exception(), err);
  }
}

}  // namespace evalign::cli
