#include "travlearn/wire.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>

namespace travlearn {

using nlohmann::json;

namespace {

using Check = std::function<std::optional<std::string>(const json&)>;

enum class Kind { number, integer, string, boolean, array, object, vec2 };

bool is_kind(const json& v, Kind k) {
  switch (k) {
    case Kind::number: return v.is_number() && std::isfinite(v.get<double>());
    case Kind::integer: return v.is_number_integer() || v.is_number_unsigned();
    case Kind::string: return v.is_string();
    case Kind::boolean: return v.is_boolean();
    case Kind::array: return v.is_array();
    case Kind::object: return v.is_object();
    case Kind::vec2: return v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number();
  }
  return false;
}

struct Field {
  Kind kind;
  bool required;
};

using Schema = std::map<std::string, Field>;

const std::map<std::string, Schema>& schemas() {
  static const std::map<std::string, Schema> s{
      {"state",
       {{"t", {Kind::number, true}},
        {"pose", {Kind::array, true}},
        {"velocity", {Kind::vec2, true}},
        {"command", {Kind::array, true}},
        {"mode", {Kind::string, true}},
        {"goal", {Kind::vec2, false}}}},
      {"trav_image",
       {{"t", {Kind::number, true}},
        {"camera", {Kind::string, true}},
        {"height", {Kind::integer, true}},
        {"width", {Kind::integer, true}},
        {"mode", {Kind::string, true}},
        {"snapshot", {Kind::integer, true}},
        {"values", {Kind::array, true}}}},
      {"grid",
       {{"t", {Kind::number, true}},
        {"cells", {Kind::integer, true}},
        {"resolution", {Kind::number, true}},
        {"origin", {Kind::vec2, true}},
        {"values", {Kind::array, true}}}},
      {"sdf",
       {{"t", {Kind::number, true}},
        {"cells", {Kind::integer, true}},
        {"resolution", {Kind::number, true}},
        {"origin", {Kind::vec2, true}},
        {"all_obstacle", {Kind::boolean, true}},
        {"values", {Kind::array, true}}}},
      {"metrics",
       {{"t", {Kind::number, true}},
        {"step", {Kind::integer, true}},
        {"loss_total", {Kind::number, true}},
        {"loss_trav", {Kind::number, true}},
        {"loss_reco", {Kind::number, true}},
        {"n_traversed", {Kind::integer, true}},
        {"threshold", {Kind::number, true}},
        {"mission_nodes", {Kind::integer, true}}}},
      {"snapshot_info",
       {{"t", {Kind::number, true}},
        {"id", {Kind::integer, true}},
        {"step", {Kind::integer, true}},
        {"threshold", {Kind::number, true}},
        {"mu_pos", {Kind::number, true}},
        {"sigma_pos", {Kind::number, true}}}},
      {"teleop", {{"vx", {Kind::number, true}}, {"vy", {Kind::number, false}}, {"wz", {Kind::number, true}}}},
      {"mode", {{"mode", {Kind::string, true}}, {"goal", {Kind::vec2, false}}, {"carrot", {Kind::boolean, false}}}},
      {"param_update",
       {{"k_sigma", {Kind::number, false}},
        {"fpr_max", {Kind::number, false}},
        {"alpha", {Kind::number, false}},
        {"max_linear", {Kind::number, false}},
        {"max_angular", {Kind::number, false}}}},
      {"error", {{"reason", {Kind::string, true}}}},
  };
  return s;
}

std::optional<std::string> semantic_check(const std::string& type, const json& b) {
  if (type == "mode") {
    const auto m = b["mode"].get<std::string>();
    if (m != "teleop" && m != "autonomous") return "mode must be 'teleop' or 'autonomous'";
  } else if (type == "param_update") {
    if (b.empty()) return "param_update carries no parameter";
    if (b.contains("k_sigma") && !(b["k_sigma"].get<double>() > 0.0)) return "k_sigma must be positive";
    if (b.contains("fpr_max")) {
      const double f = b["fpr_max"].get<double>();
      if (!(f > 0.0 && f < 1.0)) return "fpr_max must be in (0, 1)";
    }
    if (b.contains("alpha")) {
      const double a = b["alpha"].get<double>();
      if (!(a > 0.0 && a <= 1.0)) return "alpha must be in (0, 1]";
    }
    for (const char* k : {"max_linear", "max_angular"})
      if (b.contains(k) && !(b[k].get<double>() > 0.0)) return std::string(k) + " must be positive";
  } else if (type == "state") {
    if (b["pose"].size() != 3) return "pose must be [x, y, theta]";
    if (b["command"].size() != 3) return "command must be [vx, vy, wz]";
  } else if (type == "trav_image") {
    if (b["values"].size() != b["height"].get<std::size_t>() * b["width"].get<std::size_t>())
      return "values must hold height*width entries";
  } else if (type == "grid" || type == "sdf") {
    const auto n = b["cells"].get<std::size_t>();
    if (b["values"].size() != n * n) return "values must hold cells*cells entries";
  }
  return std::nullopt;
}

json vec(Vec2 v) { return json::array({v.x, v.y}); }

}  // namespace

std::optional<std::string> validate_wire_message(const json& msg) {
  if (!msg.is_object()) return "message must be a JSON object";
  for (auto it = msg.begin(); it != msg.end(); ++it)
    if (it.key() != "v" && it.key() != "type" && it.key() != "body") return "unknown envelope key '" + it.key() + "'";
  if (!msg.contains("v") || !msg["v"].is_number_integer()) return "missing protocol version 'v'";
  if (msg["v"].get<int>() != kWireVersion) return "unsupported protocol version " + msg["v"].dump();
  if (!msg.contains("type") || !msg["type"].is_string()) return "missing message type";
  const auto type = msg["type"].get<std::string>();
  const auto found = schemas().find(type);
  if (found == schemas().end()) return "unknown message type '" + type + "'";
  if (!msg.contains("body") || !msg["body"].is_object()) return "missing message body";
  const json& body = msg["body"];
  for (const auto& [name, field] : found->second) {
    if (!body.contains(name)) {
      if (field.required) return type + ": missing field '" + name + "'";
      continue;
    }
    if (!is_kind(body[name], field.kind)) return type + ": field '" + name + "' has the wrong type";
  }
  for (auto it = body.begin(); it != body.end(); ++it)
    if (!found->second.count(it.key())) return type + ": unknown field '" + it.key() + "'";
  if (auto err = semantic_check(type, body)) return type + ": " + *err;
  return std::nullopt;
}

json parse_wire_message(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("not JSON: ") + e.what());
  }
  if (auto err = validate_wire_message(j)) throw std::invalid_argument(*err);
  return j;
}

json wire_envelope(const std::string& type, json body) {
  return {{"v", kWireVersion}, {"type", type}, {"body", std::move(body)}};
}

json wire_error(const std::string& reason) { return wire_envelope("error", {{"reason", reason}}); }

json wire_state(double t, const RobotState& s, const TwistCommand& cmd, const std::string& mode,
                std::optional<Vec2> goal) {
  json b{{"t", t},
         {"pose", {s.pose.x, s.pose.y, s.pose.theta}},
         {"velocity", vec(s.measured_velocity)},
         {"command", {cmd.vx, cmd.vy, cmd.wz}},
         {"mode", mode}};
  if (goal) b["goal"] = vec(*goal);
  return wire_envelope("state", std::move(b));
}

json wire_trav_image(double t, const std::string& camera_id, const TraversabilityImage& img) {
  json values = json::array();
  for (std::size_t p = 0; p < img.values.size(); ++p) {
    const bool ok = img.valid.empty() || img.valid[p];
    // three decimals is plenty for display
    values.push_back(ok ? std::round(img.values[p] * 1000.0) / 1000.0 : -1.0);
  }
  return wire_envelope("trav_image", {{"t", t},
                                      {"camera", camera_id},
                                      {"height", img.height},
                                      {"width", img.width},
                                      {"mode", to_string(img.mode)},
                                      {"snapshot", img.snapshot_id},
                                      {"values", std::move(values)}});
}

json wire_grid(double t, const TravGrid& grid) {
  json values = json::array();
  for (int j = 0; j < grid.cells(); ++j)
    for (int i = 0; i < grid.cells(); ++i)
      values.push_back(grid.known(i, j) ? std::round(grid.value(i, j) * 1000.0) / 1000.0 : -1.0);
  return wire_envelope("grid", {{"t", t},
                                {"cells", grid.cells()},
                                {"resolution", grid.resolution()},
                                {"origin", vec(grid.origin())},
                                {"values", std::move(values)}});
}

json wire_sdf(double t, const SdfGrid& sdf) {
  json values = json::array();
  for (double d : sdf.distance) values.push_back(std::round(d * 1000.0) / 1000.0);
  return wire_envelope("sdf", {{"t", t},
                               {"cells", sdf.cells},
                               {"resolution", sdf.resolution},
                               {"origin", vec(sdf.origin)},
                               {"all_obstacle", sdf.all_obstacle},
                               {"values", std::move(values)}});
}

json wire_metrics(double t, const TrainMetrics& m, double threshold, std::size_t mission_nodes) {
  return wire_envelope("metrics", {{"t", t},
                                   {"step", m.step},
                                   {"loss_total", m.total},
                                   {"loss_trav", m.trav},
                                   {"loss_reco", m.reco},
                                   {"n_traversed", m.n_traversed},
                                   {"threshold", threshold},
                                   {"mission_nodes", mission_nodes}});
}

json wire_snapshot_info(double t, const ModelSnapshot& snap) {
  return wire_envelope("snapshot_info", {{"t", t},
                                         {"id", snap.id},
                                         {"step", snap.training_step},
                                         {"threshold", snap.threshold},
                                         {"mu_pos", snap.stats.mu},
                                         {"sigma_pos", snap.stats.sigma}});
}

InboundMessage decode_inbound(const json& msg) {
  if (auto err = validate_wire_message(msg)) throw std::invalid_argument(*err);
  const auto type = msg["type"].get<std::string>();
  const json& b = msg["body"];
  if (type == "teleop") return TwistCommand{b["vx"].get<double>(), b.value("vy", 0.0), b["wz"].get<double>()};
  if (type == "mode") {
    ModeChange m{b["mode"].get<std::string>(), std::nullopt, std::nullopt};
    if (b.contains("goal")) m.goal = Vec2{b["goal"][0].get<double>(), b["goal"][1].get<double>()};
    if (b.contains("carrot")) m.carrot = b["carrot"].get<bool>();
    return m;
  }
  if (type == "param_update") {
    ParamUpdate p;
    auto opt = [&](const char* k, std::optional<double>& out) {
      if (b.contains(k)) out = b[k].get<double>();
    };
    opt("k_sigma", p.k_sigma);
    opt("fpr_max", p.fpr_max);
    opt("alpha", p.alpha);
    opt("max_linear", p.max_linear);
    opt("max_angular", p.max_angular);
    return p;
  }
  throw std::invalid_argument("'" + type + "' is not an inbound message");
}

}  // namespace travlearn
