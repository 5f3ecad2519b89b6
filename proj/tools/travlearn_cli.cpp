// travlearn command line: run / replay / eval / export-features / serve
#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "travlearn/evaluation.hpp"
#include "travlearn/runtime.hpp"
#include "travlearn/server.hpp"

using namespace travlearn;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  std::optional<std::string> mode;
  std::optional<std::string> world;
  std::optional<double> fpr_max;
  std::optional<double> k_sigma;
  std::optional<double> alpha;
  std::optional<std::string> inference;
  std::optional<std::string> subsample;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--duration", duration, "session length in simulated seconds");
    app->add_option("--mode", mode, "teleop | autonomous");
    app->add_option("--world", world, "world file");
    app->add_option("--fpr-max", fpr_max, "maximum false positive rate for the threshold");
    app->add_option("--k-sigma", k_sigma, "confidence width in standard deviations");
    app->add_option("--alpha", alpha, "map fusion constant");
    app->add_option("--inference", inference, "segment | pixel");
    app->add_option("--subsample", subsample, "random | slic_like | semantic_knn");
  }

  // config file wins unless a flag is given explicitly
  void apply(SessionConfig& c) const {
    if (seed) c.seed = *seed;
    if (duration) c.duration = *duration;
    if (mode) c.mode = parse_session_mode(*mode);
    if (world) c.world = *world;
    if (fpr_max) c.learning.loss.fpr_max = *fpr_max;
    if (k_sigma) c.learning.loss.k_sigma = *k_sigma;
    if (alpha) c.map.alpha = *alpha;
    if (inference) {
      c.inference_mode = parse_inference_mode(*inference);
      c.perception.keep_features = c.inference_mode == InferenceMode::pixel;
    }
    if (subsample) c.perception.subsample.strategy = parse_subsample_strategy(*subsample);
    c.validate();
  }
};

struct Demo {
  std::vector<Vec2> waypoints;
  std::vector<Vec2> goals;
};

std::vector<Pose2> eval_views_for(const TerrainWorld& world, const SessionConfig& cfg, int count) {
  return eval_views(world, cfg.cameras.front().model, count, mix_seed(cfg.seed, 77));
}

Demo load_demo(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open demo file " + path);
  const json j = json::parse(in);
  Demo d;
  for (const auto& w : j.value("waypoints", json::array())) d.waypoints.push_back({w[0].get<double>(), w[1].get<double>()});
  for (const auto& g : j.value("goals", json::array())) d.goals.push_back({g[0].get<double>(), g[1].get<double>()});
  return d;
}

int cmd_run(const std::string& config, const Overrides& ov, const std::string& out, const std::string& demo_path,
            double auto_duration, int eval_views) {
  SessionConfig cfg = load_config(config);
  ov.apply(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  Session s(cfg, {out});
  Demo demo;
  if (!demo_path.empty()) demo = load_demo(demo_path);
  if (!demo.waypoints.empty()) s.set_script(std::make_shared<WaypointScript>(demo.waypoints, 1.0));

  std::unique_ptr<SyntheticExtractor> eval_extractor;
  std::vector<Pose2> views;
  if (eval_views > 0) {
    eval_extractor = make_session_extractor(cfg, s.world());
    views = eval_views_for(s.world(), cfg, eval_views);
    s.on_publish = [&](const ModelSnapshotPtr& snap) {
      const auto r = evaluate_snapshot(s.world(), *eval_extractor, cfg.cameras.front().model, cfg.perception, *snap,
                                       views, InferenceMode::pixel);
      std::cout << json{{"snapshot", snap->id}, {"step", snap->training_step}, {"threshold", snap->threshold},
                        {"auc", r.auc}, {"accuracy", r.accuracy}}.dump()
                << std::endl;
    };
  }
  s.run_for(cfg.duration);
  if (auto_duration > 0 && !demo.goals.empty()) {
    s.set_mode(SessionMode::autonomous);
    s.set_goals(demo.goals);
    s.run_for(auto_duration, [](const Session& x) { return x.goals_remaining() == 0; });
  }
  s.finish();
  json summary = s.summary().to_json();
  summary["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online self-supervised traversability learning on a simulated robot"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a session on the virtual clock");
  std::string config, out = "session_out", demo;
  double auto_duration = 0.0;
  int eval_views = 0;
  Overrides ov;
  run->add_option("-c,--config", config, "session config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--out", out, "output directory");
  run->add_option("--demo", demo, "demo file with teleop waypoints (and goals)")->check(CLI::ExistingFile);
  run->add_option("--auto-duration", auto_duration, "seconds of autonomous goal following after the demo");
  run->add_option("--eval-views", eval_views, "evaluate every snapshot on this many fixed views");
  ov.add(run);

  auto* replay = app.add_subcommand("replay", "rebuild the learner from a session log");
  std::string log_path, features_path, ckpt_out, compare, world_override;
  replay->add_option("--log", log_path, "session log")->required()->check(CLI::ExistingFile);
  replay->add_option("--features", features_path, "feature sidecar")->required()->check(CLI::ExistingFile);
  replay->add_option("--world", world_override, "world file if it moved since recording");
  replay->add_option("-o,--out", ckpt_out, "write the replayed checkpoint here");
  replay->add_option("--compare", compare, "checkpoint to compare against (exit 1 on mismatch)")
      ->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "score a checkpoint against ground-truth traction");
  std::string ckpt, eval_mode = "pixel";
  int views = 8;
  double cut = 0.5;
  eval->add_option("-c,--config", config, "session config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--views", views, "number of evaluation views");
  eval->add_option("--inference", eval_mode, "segment | pixel");
  eval->add_option("--traction-cut", cut, "traction at or above which ground counts as traversable");

  auto* exportf = app.add_subcommand("export-features", "write feature rasters along a demo route");
  std::string export_dir;
  double spacing = 0.5;
  exportf->add_option("-c,--config", config, "session config (JSON)")->required()->check(CLI::ExistingFile);
  exportf->add_option("--demo", demo, "demo file with waypoints")->required()->check(CLI::ExistingFile);
  exportf->add_option("-o,--out", export_dir, "output directory")->required();
  exportf->add_option("--spacing", spacing, "metres between exported frames");

  auto* serve = app.add_subcommand("serve", "run a session in real time behind the console endpoint");
  std::string bind = "127.0.0.1", static_dir = "console";
  unsigned short port = 8765;
  double time_scale = 1.0;
  serve->add_option("-c,--config", config, "session config (JSON)")->required()->check(CLI::ExistingFile);
  serve->add_option("--bind", bind, "listen address");
  serve->add_option("--port", port, "listen port");
  serve->add_option("--static", static_dir, "console asset directory");
  serve->add_option("-o,--out", out, "output directory");
  serve->add_option("--time-scale", time_scale, "simulated seconds per wall second");
  Overrides serve_ov;
  serve_ov.add(serve);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, ov, out, demo, auto_duration, eval_views);

    if (*replay) {
      const ModelSnapshot snap = replay_session(log_path, features_path, world_override);
      if (!ckpt_out.empty()) save_checkpoint(ckpt_out, snap, BlobType::float64);
      std::cout << json{{"steps", snap.training_step}, {"threshold", snap.threshold}}.dump() << std::endl;
      if (!compare.empty()) {
        const ModelSnapshot ref = load_checkpoint(compare);
        const bool same = std::equal(ref.model.params().begin(), ref.model.params().end(),
                                     snap.model.params().begin(), snap.model.params().end());
        std::cout << (same ? "identical" : "DIFFERENT") << std::endl;
        return same ? 0 : 1;
      }
      return 0;
    }

    if (*eval) {
      const SessionConfig cfg = load_config(config);
      const TerrainWorld world = load_session_world(cfg);
      const ModelSnapshot snap = load_checkpoint(ckpt);
      auto extractor = make_session_extractor(cfg, world);
      const auto poses = eval_views_for(world, cfg, views);
      const auto r = evaluate_snapshot(world, *extractor, cfg.cameras.front().model, cfg.perception, snap, poses,
                                       parse_inference_mode(eval_mode), cut);
      std::cout << json{{"auc", r.auc}, {"accuracy", r.accuracy}, {"pixels", r.pixels}, {"positives", r.positives},
                        {"threshold", snap.threshold}}
                       .dump(2)
                << std::endl;
      return 0;
    }

    if (*exportf) {
      const SessionConfig cfg = load_config(config);
      const TerrainWorld world = load_session_world(cfg);
      auto extractor = make_session_extractor(cfg, world);
      const Demo d = load_demo(demo);
      std::filesystem::create_directories(export_dir);
      FeatureLogWriter writer(std::filesystem::path(export_dir) / "features.index",
                              std::filesystem::path(export_dir) / "features.bin");
      std::size_t n = 0;
      double t = 0.0;
      for (std::size_t i = 0; i + 1 < d.waypoints.size(); ++i) {
        const Vec2 a = d.waypoints[i], b = d.waypoints[i + 1];
        const double len = (b - a).norm();
        const double heading = std::atan2(b.y - a.y, b.x - a.x);
        for (double s = 0.0; s < len; s += spacing) {
          RobotState st;
          st.pose = {a.x + (b.x - a.x) * s / len, a.y + (b.y - a.y) * s / len, heading};
          for (const auto& cam : cfg.cameras) {
            const Observation obs = render_camera(world, st, cam.model, t);
            writer.append(t, cam.model.camera_id, st.pose, extract_features(obs, *extractor, cfg.perception));
            ++n;
          }
          t += 1.0;
        }
      }
      writer.flush();
      std::cout << json{{"frames", n}}.dump() << std::endl;
      return 0;
    }

    if (*serve) {
      SessionConfig cfg = load_config(config);
      serve_ov.apply(cfg);
      Session session(cfg, {out});
      ConsoleServer server(bind, port, static_dir, [&](InboundMessage m) { session.post(std::move(m)); });
      std::cout << "console on http://" << bind << ":" << server.port() << "/  (websocket /ws)" << std::endl;
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      auto last_state = std::chrono::steady_clock::now() - std::chrono::seconds(1);
      auto last_image = last_state;
      std::uint64_t last_snapshot = ~0ull;
      session.on_tick = [&](const Session& s) {
        const auto now = std::chrono::steady_clock::now();
        if (now - last_state >= std::chrono::milliseconds(50)) {  // 20 Hz
          last_state = now;
          server.broadcast(wire_state(s.time(), s.robot(), s.last_command(), to_string(s.mode()), s.goal()));
        }
        if (now - last_image >= std::chrono::milliseconds(250)) {  // 4 Hz
          last_image = now;
          if (auto img = s.last_trav_image()) server.broadcast(wire_trav_image(s.time(), img->first, img->second));
          server.broadcast(wire_grid(s.time(), s.grid()));
          server.broadcast(wire_sdf(s.time(), s.sdf()));
          const auto m = s.last_metrics();
          const auto snap = s.snapshot();
          server.broadcast(wire_metrics(s.time(), m, snap ? snap->threshold : 0.5, s.pipeline().mission().size()));
          if (snap && snap->id != last_snapshot) {
            last_snapshot = snap->id;
            server.broadcast(wire_snapshot_info(s.time(), *snap));
          }
        }
      };
      session.run_threaded(g_stop, time_scale);
      session.on_tick = nullptr;
      server.stop();
      session.finish();
      std::cout << session.summary().to_json().dump(2) << std::endl;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
