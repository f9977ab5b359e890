// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "xfields/dataset.hpp"
#include "xfields/image_io.hpp"
#include "xfields/metrics.hpp"
#include "xfields/render.hpp"
#include "xfields/service.hpp"

namespace xfields::cli {
namespace {

namespace fs = std::filesystem;

std::vector<double> parse_numbers(std::string_view text) {
  std::vector<double> values;
  while (true) {
    const auto comma = text.find(',');
    const std::string_view part = text.substr(0, comma);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size() ||
        !std::isfinite(v)) {
      throw ConfigError("not a finite number: \"" + std::string(part) + "\"");
    }
    values.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return values;
}

XFieldCoord parse_coord(std::string_view text, const model::ModelConfig& cfg, bool raw) {
  std::vector<double> v = parse_numbers(text);
  if (v.size() != cfg.dimension_count()) {
    throw CoordinateLengthError("coordinate has " + std::to_string(v.size()) +
                                " components, model has " +
                                std::to_string(cfg.dimension_count()) + " dimensions");
  }
  if (raw) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = cfg.dims[i].normalize(v[i]);
  }
  return XFieldCoord(std::move(v));
}

std::size_t resolve_axis(const std::string& text, const model::ModelConfig& cfg) {
  for (std::size_t i = 0; i < cfg.dims.size(); ++i) {
    if (cfg.dims[i].name == text) return i;
  }
  std::size_t axis = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), axis);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() ||
      axis >= cfg.dims.size()) {
    throw ConfigError("unknown axis \"" + text + "\"");
  }
  return axis;
}

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw ConfigError("grid must look like MxN, got \"" + text + "\"");
  const auto m = parse_numbers(text.substr(0, x));
  const auto n = parse_numbers(text.substr(x + 1));
  if (m.size() != 1 || n.size() != 1 || m[0] < 1 || n[0] < 1 || m[0] != std::floor(m[0]) ||
      n[0] != std::floor(n[0])) {
    throw ConfigError("grid must look like MxN, got \"" + text + "\"");
  }
  return {static_cast<std::size_t>(m[0]), static_cast<std::size_t>(n[0])};
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

std::string loss_csv(const std::vector<double>& losses) {
  std::string csv = "step,loss\n";
  char line[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.17g\n", i, losses[i]);
    csv += line;
  }
  return csv;
}

// Which images train and which are withheld. "auto" uses the manifest's
// held-out list when it has one and trains on everything otherwise.
data::Split select_split(const data::Manifest& m, const std::string& protocol) {
  if (protocol == "all" || (protocol == "auto" && !m.heldout)) {
    data::Split s;
    for (std::size_t i = 0; i < m.images.size(); ++i) s.train.push_back(i);
    return s;
  }
  const auto p = protocol == "auto" ? data::HoldoutProtocol::explicit_list
                                    : data::holdout_protocol_from_string(protocol);
  return data::holdout_split(m, p);
}

std::shared_ptr<const renderd::Renderer> open_renderer(const fs::path& path) {
  auto model = std::make_shared<renderd::Model>(renderd::import_model(path));
  return std::make_shared<renderd::Renderer>(std::move(model));
}

// ------------------------------------------------------------- synth

struct SynthArgs {
  std::string kind;
  fs::path out;
  std::size_t size = 64;
  std::size_t frames = 3;
  double shift = 8.0;
  double disparity = 4.0;
  std::string grid = "3x3";
  std::size_t lights = 5;
  data::ShadowGeometry shadow;
  std::uint64_t texture_seed = 1;
  std::size_t margin = 40;
  std::string protocol = "auto";
};

int run_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  const auto kind = data::synth_kind_from_string(a.kind);
  const auto texture = data::make_texture(a.size, a.size, a.margin, a.texture_seed);
  data::SyntheticScene scene;
  data::HoldoutProtocol natural = data::HoldoutProtocol::middle_frame;
  switch (kind) {
    case data::SynthKind::translate1d:
      scene = data::synth_translate(texture, a.size, a.size, a.shift, a.frames);
      break;
    case data::SynthKind::lightfield_plane: {
      const auto [m, n] = parse_grid(a.grid);
      scene = data::synth_lightfield_plane(texture, a.size, a.size, a.disparity, m, n);
      natural = data::HoldoutProtocol::center;
      break;
    }
    case data::SynthKind::shadow_sweep:
      scene = data::synth_shadow_sweep(texture, a.size, a.size, a.shadow, a.lights);
      break;
  }
  if (a.protocol == "auto") {
    try {
      scene.manifest.heldout = data::holdout_split(scene.manifest, natural).heldout;
    } catch (const ConfigError& e) {
      err << "note: no held-out list written (" << e.what() << ")\n";
    }
  } else if (a.protocol != "none") {
    const auto p = data::holdout_protocol_from_string(a.protocol);
    scene.manifest.heldout = data::holdout_split(scene.manifest, p).heldout;
  }
  data::write_scene(scene, a.out);
  out << "wrote " << scene.images.size() << " images to " << a.out.string();
  if (scene.manifest.heldout) out << " (" << scene.manifest.heldout->size() << " held out)";
  out << "\n";
  return 0;
}

// ------------------------------------------------------------- train

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  std::size_t steps = 1000;
  double lr = 1e-4;
  std::size_t k = 0;
  bool delight = false;
  std::uint64_t seed = 0;
  std::string protocol = "auto";
  fs::path loss_log;
  fs::path checkpoint;
  std::size_t checkpoint_every = 0;
  fs::path resume;
  std::size_t flow_downsample = 1;
  std::size_t seed_channels = 128;
  std::size_t min_channels = 16;
  double sigma = 10.0;
  std::size_t log_every = 100;
};

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& /*err*/) {
  const data::Manifest manifest = data::load_manifest(a.manifest);

  train::TrainConfig tc;
  tc.adam.learning_rate = a.lr;
  tc.steps = a.steps;
  tc.seed = a.seed;
  tc.k = a.k;
  tc.checkpoint_interval = a.checkpoint.empty() ? 0 : a.checkpoint_every;

  renderd::Model result;
  std::optional<train::Trainer> trainer;
  if (!a.resume.empty()) {
    // Architecture and observations come from the checkpoint.
    renderd::OptimizerState state;
    result = renderd::load_checkpoint(a.resume, state);
    train::Checkpoint ck{result.params, std::move(state.moments), state.step,
                         std::move(state.loss_history)};
    trainer.emplace(result.observations, std::move(ck), tc);
  } else {
    const data::Split split = select_split(manifest, a.protocol);
    auto observations =
        data::load_observations(manifest, a.manifest.parent_path(), split.train);
    model::ModelConfig cfg;
    cfg.dims = manifest.dims;
    cfg.height = observations.front().image.extent(0);
    cfg.width = observations.front().image.extent(1);
    cfg.flow_downsample = a.flow_downsample;
    cfg.seed_channels = a.seed_channels;
    cfg.min_channels = a.min_channels;
    cfg.sigma = a.sigma;
    cfg.delight = a.delight;
    cfg.validate();
    result.name = manifest.name;
    result.image_indices = split.train;
    result.observations = observations;
    trainer.emplace(std::move(observations),
                    model::init_params(cfg, split.train.size(), a.seed), tc);
  }
  result.training.seed = a.seed;
  result.training.steps = a.steps;
  result.training.learning_rate = a.lr;
  result.training.k = tc.neighbor_count(result.observations.size());

  auto snapshot = [&](const train::Trainer& t) {
    result.params = t.params();
    result.training.final_loss = t.loss_history().empty() ? 0.0 : t.loss_history().back();
  };
  const auto t0 = std::chrono::steady_clock::now();
  trainer->run(
      [&](const train::StepResult& r, const train::Trainer&) {
        if (a.log_every > 0 && (r.step % a.log_every == 0 || r.step + 1 == a.steps)) {
          out << "step " << r.step << " target " << r.target << " loss " << r.loss << "\n";
        }
      },
      [&](const train::StepResult&, const train::Trainer& t) {
        if (a.checkpoint.empty()) return;
        snapshot(t);
        const train::Checkpoint ck = t.checkpoint();
        renderd::OptimizerState state{ck.moments, ck.step, ck.loss_history};
        ensure_parent(a.checkpoint);
        renderd::save_checkpoint(result, state, a.checkpoint);
      });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  snapshot(*trainer);
  ensure_parent(a.out);
  renderd::export_model(result, a.out);
  fs::path log = a.loss_log;
  if (log.empty()) log = fs::path(a.out).replace_extension(".loss.csv");
  write_text(log, loss_csv(trainer->loss_history()));
  out << "trained " << result.observations.size() << " observations for "
      << trainer->step_index() << " steps in " << secs << " s; final loss "
      << result.training.final_loss << "\nwrote " << a.out.string() << " and "
      << log.string() << "\n";
  return 0;
}

// -------------------------------------------------------------- eval

struct EvalArgs {
  fs::path model;
  fs::path manifest;
  std::string protocol = "auto";
  fs::path json;
  fs::path csv;
};

int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto renderer = open_renderer(a.model);
  const data::Manifest manifest = data::load_manifest(a.manifest);
  const auto& cfg = renderer->model().config();
  if (manifest.dims != cfg.dims) {
    throw ConfigError("manifest dimensions do not match the model's");
  }
  const std::string protocol = a.protocol == "auto" ? "explicit" : a.protocol;
  if (protocol == "all") throw ConfigError("eval needs a held-out protocol, not \"all\"");
  const data::Split split = select_split(manifest, protocol);
  if (split.heldout.empty()) throw ConfigError("protocol leaves no held-out images");
  for (std::size_t i : split.heldout) {
    const auto& used = renderer->model().image_indices;
    if (std::find(used.begin(), used.end(), i) != used.end()) {
      err << "warning: image " << i << " was a training observation\n";
    }
  }
  const auto heldout = data::load_observations(manifest, a.manifest.parent_path(), split.heldout);
  const metrics::EvalReport report = metrics::evaluate(
      [&](const XFieldCoord& x) { return renderer->render_frame(x); }, heldout, split.heldout);

  for (const auto& s : report.images) {
    out << "image " << s.index << ": psnr " << s.psnr_db << " dB, ssim " << s.ssim << ", mse "
        << s.mse << "\n";
  }
  out << "mean psnr " << report.mean_psnr_db << " dB, ssim " << report.mean_ssim << ", mse "
      << report.mean_mse << " over " << report.images.size() << " images\n";
  if (!a.json.empty()) write_text(a.json, report.to_json());
  if (!a.csv.empty()) write_text(a.csv, report.to_csv());
  return 0;
}

// ------------------------------------------------------ render / effect

struct RenderArgs {
  fs::path model;
  std::string coord;
  bool raw = false;
  fs::path out;
  std::size_t width = 0;
  std::size_t height = 0;
  std::string axis;
  double radius = 0.0;
  std::size_t samples = 9;
};

int run_render(const RenderArgs& a, bool effect, std::ostream& out) {
  const auto renderer = open_renderer(a.model);
  const auto& cfg = renderer->model().config();
  const XFieldCoord x = parse_coord(a.coord, cfg, a.raw);
  const ad::Tensor<float> image =
      effect ? renderer->render_effect(x, resolve_axis(a.axis, cfg), a.radius, a.samples,
                                       a.width, a.height)
             : renderer->render_frame(x, a.width, a.height);
  ensure_parent(a.out);
  data::save_png(a.out, image);
  out << "wrote " << a.out.string() << "\n";
  return 0;
}

// -------------------------------------------------------------- serve

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct ServeArgs {
  fs::path model;
  std::string bind = "127.0.0.1:8080";
  fs::path static_dir;
};

int run_serve(const ServeArgs& a, std::ostream& out) {
  auto renderer = open_renderer(a.model);
  renderd::ServiceOptions opts = renderd::parse_bind_address(a.bind);
  opts.static_dir = a.static_dir;
  renderd::Service service(renderer, opts);
  const int port = service.bind();
  out << "serving \"" << renderer->model().name << "\" at http://" << opts.host << ":" << port
      << "/\n"
      << std::flush;

  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread worker([&] { service.run(); });
  service.wait_until_ready();
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  worker.join();
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"X-Fields: learn and render view/time/light interpolation from images", "xfields"};
  app.require_subcommand(1);
  app.fallthrough(false);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a synthetic scene with known flow");
  synth->add_option("kind", sa.kind, "translate1d | lightfield_plane | shadow_sweep")
      ->required()
      ->check(CLI::IsMember({"translate1d", "lightfield_plane", "shadow_sweep"}));
  synth->add_option("--out,-o", sa.out, "Output directory")->required();
  synth->add_option("--size", sa.size, "Image side in pixels")->capture_default_str();
  synth->add_option("--frames", sa.frames, "translate1d frame count")->capture_default_str();
  synth->add_option("--shift", sa.shift, "translate1d total shift, px")->capture_default_str();
  synth->add_option("--disparity", sa.disparity, "lightfield_plane disparity, px")
      ->capture_default_str();
  synth->add_option("--grid", sa.grid, "lightfield_plane views, MxN")->capture_default_str();
  synth->add_option("--lights", sa.lights, "shadow_sweep light positions")->capture_default_str();
  synth->add_option("--shadow-factor", sa.shadow.factor, "Shadow darkening; 1 disables it")
      ->capture_default_str();
  synth->add_option("--shadow-radius", sa.shadow.radius, "Shadow disc radius, px")
      ->capture_default_str();
  synth->add_option("--shadow-travel", sa.shadow.travel_px, "Shadow travel over the sweep, px")
      ->capture_default_str();
  synth->add_option("--texture-seed", sa.texture_seed, "Texture RNG seed")->capture_default_str();
  synth->add_option("--margin", sa.margin, "Texture margin beyond the frame, px")
      ->capture_default_str();
  synth->add_option("--protocol", sa.protocol,
                    "Held-out list to record: auto | none | corners | center | middle_frame")
      ->capture_default_str();

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Fit a model to a manifest's training images");
  trainc->add_option("--manifest,-m", ta.manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  trainc->add_option("--out,-o", ta.out, "Model file to write")->required();
  trainc->add_option("--steps", ta.steps, "Optimizer steps")->capture_default_str();
  trainc->add_option("--lr", ta.lr, "Adam learning rate")->capture_default_str();
  trainc->add_option("--k", ta.k, "Sources per reconstruction; 0 = default")
      ->capture_default_str();
  trainc->add_flag("--delight", ta.delight, "Learn a shading/albedo split");
  trainc->add_option("--seed", ta.seed, "Initialization and sampling seed")
      ->capture_default_str();
  trainc->add_option("--protocol", ta.protocol,
                     "Images to withhold: auto | all | explicit | corners | center | middle_frame")
      ->capture_default_str();
  trainc->add_option("--loss-log", ta.loss_log, "Loss CSV (default: <out>.loss.csv)");
  trainc->add_option("--checkpoint", ta.checkpoint, "Checkpoint file to write");
  trainc->add_option("--checkpoint-every", ta.checkpoint_every,
                     "Steps between checkpoints; 0 writes one at the end")
      ->capture_default_str();
  trainc->add_option("--resume", ta.resume, "Continue from a checkpoint")
      ->check(CLI::ExistingFile);
  trainc->add_option("--flow-downsample", ta.flow_downsample, "Decode flow at 1/2/4x lower res")
      ->capture_default_str();
  trainc->add_option("--seed-channels", ta.seed_channels, "Decoder seed channels")
      ->capture_default_str();
  trainc->add_option("--min-channels", ta.min_channels, "Decoder channel floor")
      ->capture_default_str();
  trainc->add_option("--sigma", ta.sigma, "Consistency bandwidth")->capture_default_str();
  trainc->add_option("--log-every", ta.log_every, "Progress interval; 0 is quiet")
      ->capture_default_str();

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "Score a model on held-out images");
  evalc->add_option("--model", ea.model, "Model file")->required()->check(CLI::ExistingFile);
  evalc->add_option("--manifest,-m", ea.manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  evalc->add_option("--protocol", ea.protocol,
                    "auto | explicit | corners | center | middle_frame")
      ->capture_default_str();
  evalc->add_option("--json", ea.json, "Write the report as JSON");
  evalc->add_option("--csv", ea.csv, "Write one CSV row per image");

  RenderArgs ra;
  auto* renderc = app.add_subcommand("render", "Render one frame to PNG");
  RenderArgs fa;
  auto* effectc = app.add_subcommand("effect", "Average frames along one axis to PNG");
  for (auto [cmd, args] : {std::pair{renderc, &ra}, std::pair{effectc, &fa}}) {
    cmd->add_option("--model", args->model, "Model file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--coord,-c", args->coord, "Comma-separated coordinate, normalized")
        ->required();
    cmd->add_flag("--raw", args->raw, "Coordinate is in the manifest's raw units");
    cmd->add_option("--out,-o", args->out, "PNG to write")->required();
    cmd->add_option("--width", args->width, "Output width; 0 = trained")->capture_default_str();
    cmd->add_option("--height", args->height, "Output height; 0 = trained")
        ->capture_default_str();
  }
  effectc->add_option("--axis", fa.axis, "Dimension name or index")->required();
  effectc->add_option("--radius", fa.radius, "Half-width of the averaged span")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  effectc->add_option("--samples,-n", fa.samples, "Frames averaged")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();

  ServeArgs va;
  auto* serve = app.add_subcommand("serve", "Serve the render API over HTTP");
  serve->add_option("--model", va.model, "Model file")->required()->check(CLI::ExistingFile);
  serve->add_option("--bind", va.bind, "host:port (port 0 picks one)")->capture_default_str();
  serve->add_option("--static", va.static_dir, "Viewer assets served at /")
      ->check(CLI::ExistingDirectory);

  std::vector<const char*> argv{"xfields"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*synth) return run_synth(sa, out, err);
    if (*trainc) return run_train(ta, out, err);
    if (*evalc) return run_eval(ea, out, err);
    if (*renderc) return run_render(ra, false, out);
    if (*effectc) return run_render(fa, true, out);
    if (*serve) return run_serve(va, out);
  } catch (const std::exception& e) {
    err << "xfields: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace xfields::cli
