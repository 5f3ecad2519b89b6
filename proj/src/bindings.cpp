// Python bindings: the main operations, with numpy arrays at the boundary.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>

#include "travlearn/config.hpp"
#include "travlearn/evaluation.hpp"
#include "travlearn/runtime.hpp"

namespace py = pybind11;
using namespace travlearn;
using nlohmann::json;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::array_t<double> params_array(const TravModel& m) {
  py::array_t<double> out(static_cast<py::ssize_t>(m.params().size()));
  std::copy(m.params().begin(), m.params().end(), out.mutable_data());
  return out;
}

py::dict snapshot_dict(const ModelSnapshot& s) {
  py::dict d;
  d["id"] = s.id;
  d["training_step"] = s.training_step;
  d["threshold"] = s.threshold;
  d["mu"] = s.stats.mu;
  d["sigma"] = s.stats.sigma;
  d["shape"] = py::make_tuple(s.model.shape().input_dim, s.model.shape().hidden1, s.model.shape().hidden2);
  d["params"] = params_array(s.model);
  return d;
}

TravModel model_from(const ModelShape& shape, DArray params) {
  TravModel m(shape);
  if (static_cast<std::size_t>(params.size()) != m.params().size())
    throw std::invalid_argument("expected " + std::to_string(m.params().size()) + " parameters");
  std::copy(params.data(), params.data() + params.size(), m.params().begin());
  return m;
}

std::vector<Vec2> load_waypoints(const std::filesystem::path& demo, const char* key) {
  std::ifstream in(demo);
  if (!in) throw std::runtime_error("cannot open demo file " + demo.string());
  const json j = json::parse(in);
  std::vector<Vec2> out;
  for (const auto& w : j.value(key, json::array())) out.push_back({w[0].get<double>(), w[1].get<double>()});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "online self-supervised traversability learning on a simulated robot";

  // supervision
  m.def("velocity_error", [](std::pair<double, double> c, std::pair<double, double> v) {
    return velocity_error({c.first, c.second}, {v.first, v.second});
  });
  m.def(
      "traversability_score",
      [](double v_err, double k, double v_thr) {
        ScoreParams p;
        p.k = k;
        p.v_thr = v_thr;
        return traversability_score(v_err, p);
      },
      py::arg("v_err"), py::arg("k") = ScoreParams{}.k, py::arg("v_thr") = ScoreParams{}.v_thr);

  // learner
  py::class_<ModelShape>(m, "ModelShape")
      .def(py::init([](int e, int h1, int h2) { return ModelShape{e, h1, h2}; }), py::arg("input_dim") = 64,
           py::arg("hidden1") = 256, py::arg("hidden2") = 32)
      .def_readwrite("input_dim", &ModelShape::input_dim)
      .def_readwrite("hidden1", &ModelShape::hidden1)
      .def_readwrite("hidden2", &ModelShape::hidden2)
      .def("parameter_count", &ModelShape::parameter_count);
  m.def(
      "init_params", [](const ModelShape& s, std::uint64_t seed) { return params_array(TravModel::initialized(s, seed)); },
      py::arg("shape"), py::arg("seed") = 0);
  m.def(
      "forward",
      [](const ModelShape& s, DArray params, DArray embeddings) {
        if (embeddings.ndim() != 2 || embeddings.shape(1) != s.input_dim)
          throw std::invalid_argument("embeddings must have shape (n, input_dim)");
        const TravModel model = model_from(s, params);
        const auto n = embeddings.shape(0);
        py::array_t<double> trav(n), reco({n, static_cast<py::ssize_t>(s.input_dim)});
        for (py::ssize_t i = 0; i < n; ++i) {
          const auto r = forward(model, std::span<const double>(embeddings.data(i, 0), s.input_dim));
          trav.mutable_at(i) = r.traversability;
          std::copy(r.reconstruction.begin(), r.reconstruction.end(), reco.mutable_data(i, 0));
        }
        return py::make_tuple(trav, reco);
      },
      "Traversability and reconstruction for each row of `embeddings`.");
  m.def("loss_trav", &loss_trav, py::arg("predicted"), py::arg("target"), py::arg("traversed"), py::arg("confidence"));
  m.def(
      "confidence",
      [](double loss, double mu, double sigma, double k_sigma) { return confidence(loss, {mu, sigma}, k_sigma); },
      py::arg("reco_loss"), py::arg("mu"), py::arg("sigma"), py::arg("k_sigma") = 2.0);
  m.def(
      "select_threshold",
      [](DArray scores, std::vector<std::string> labels, double fpr_max) {
        std::vector<ThresholdLabel> l;
        for (const auto& s : labels) {
          if (s == "positive") l.push_back(ThresholdLabel::positive);
          else if (s == "negative") l.push_back(ThresholdLabel::negative);
          else if (s == "ignore") l.push_back(ThresholdLabel::ignore);
          else throw std::invalid_argument("label must be positive, negative or ignore");
        }
        const auto r = select_threshold(std::span<const double>(scores.data(), scores.size()), l, fpr_max);
        py::dict d;
        d["threshold"] = r.threshold;
        d["fallback"] = r.fallback;
        d["false_positive_rate"] = r.false_positive_rate;
        return d;
      },
      py::arg("scores"), py::arg("labels"), py::arg("fpr_max") = 0.15);
  m.def("load_checkpoint", [](const std::filesystem::path& p) { return snapshot_dict(load_checkpoint(p)); });

  // navmap
  m.def(
      "distance_transform",
      [](py::array_t<bool, py::array::c_style | py::array::forcecast> obstacle) {
        if (obstacle.ndim() != 2) throw std::invalid_argument("obstacle raster must be 2-D");
        const int ny = static_cast<int>(obstacle.shape(0)), nx = static_cast<int>(obstacle.shape(1));
        std::vector<std::uint8_t> raster(obstacle.data(), obstacle.data() + obstacle.size());
        const auto d2 = squared_distance_transform(raster, nx, ny);
        py::array_t<double> out({ny, nx});
        std::copy(d2.begin(), d2.end(), out.mutable_data());
        return out;
      },
      "Exact squared Euclidean distance (in cells) to the nearest True cell; rows are y.");

  // evaluation
  m.def("roc_auc", [](DArray scores, py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> positive) {
    return roc_auc(std::span<const double>(scores.data(), scores.size()),
                   std::span<const std::uint8_t>(positive.data(), positive.size()));
  });

  // gateway
  m.def("validate_wire_message", [](const std::string& text) -> std::optional<std::string> {
    try {
      return validate_wire_message(json::parse(text));
    } catch (const json::parse_error& e) {
      return std::string(e.what());
    }
  });
  m.def(
      "load_config", [](const std::filesystem::path& p) { return to_py(config_to_json(load_config(p))); },
      "Validated configuration with defaults filled in.");
  m.def(
      "run_session",
      [](const std::filesystem::path& config, const std::filesystem::path& out, const std::filesystem::path& demo,
         std::optional<double> duration, std::optional<std::uint64_t> seed, double auto_duration) {
        SessionConfig cfg = load_config(config);
        if (duration) cfg.duration = *duration;
        if (seed) cfg.seed = *seed;
        cfg.validate();
        py::gil_scoped_release release;
        Session s(cfg, {out});
        if (!demo.empty()) s.set_script(std::make_shared<WaypointScript>(load_waypoints(demo, "waypoints"), 1.0));
        s.run_for(cfg.duration);
        if (auto_duration > 0 && !demo.empty()) {
          if (auto goals = load_waypoints(demo, "goals"); !goals.empty()) {
            s.set_mode(SessionMode::autonomous);
            s.set_goals(std::move(goals));
            s.run_for(auto_duration, [](const Session& x) { return x.goals_remaining() == 0; });
          }
        }
        s.finish();
        const json summary = s.summary().to_json();
        py::gil_scoped_acquire acquire;
        return to_py(summary);
      },
      py::arg("config"), py::arg("out") = std::filesystem::path{}, py::arg("demo") = std::filesystem::path{},
      py::arg("duration") = py::none(), py::arg("seed") = py::none(), py::arg("auto_duration") = 0.0,
      "Runs a session on the virtual clock and returns its summary. An empty `out` writes nothing.");
  m.def(
      "replay_session",
      [](const std::filesystem::path& log, const std::filesystem::path& features) {
        ModelSnapshot snap;
        {
          py::gil_scoped_release release;
          snap = replay_session(log, features);
        }
        return snapshot_dict(snap);
      },
      py::arg("log"), py::arg("features"));
}
