#pragma once

#include <optional>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "travlearn/inference.hpp"
#include "travlearn/learner.hpp"
#include "travlearn/navmap.hpp"
#include "travlearn/worldsim.hpp"

namespace travlearn {

inline constexpr int kWireVersion = 1;

/// Envelope: {"v": 1, "type": <tag>, "body": {...}}. Returns an error message
/// when the message does not match the schema of its type, nullopt otherwise.
std::optional<std::string> validate_wire_message(const nlohmann::json& msg);

/// Parses text and validates; throws std::invalid_argument with the schema error.
nlohmann::json parse_wire_message(const std::string& text);

nlohmann::json wire_envelope(const std::string& type, nlohmann::json body);
nlohmann::json wire_error(const std::string& reason);

// outbound
nlohmann::json wire_state(double t, const RobotState& state, const TwistCommand& cmd, const std::string& mode,
                          std::optional<Vec2> goal);
nlohmann::json wire_trav_image(double t, const std::string& camera_id, const TraversabilityImage& img);
nlohmann::json wire_grid(double t, const TravGrid& grid);
nlohmann::json wire_sdf(double t, const SdfGrid& sdf);
nlohmann::json wire_metrics(double t, const TrainMetrics& m, double threshold, std::size_t mission_nodes);
nlohmann::json wire_snapshot_info(double t, const ModelSnapshot& snap);

// inbound
struct ParamUpdate {
  std::optional<double> k_sigma;
  std::optional<double> fpr_max;
  std::optional<double> alpha;
  std::optional<double> max_linear;
  std::optional<double> max_angular;
};

struct ModeChange {
  std::string mode;  // teleop | autonomous
  std::optional<Vec2> goal;
  std::optional<bool> carrot;
};

using InboundMessage = std::variant<TwistCommand, ModeChange, ParamUpdate>;

/// Decodes a validated teleop / mode / param_update message.
InboundMessage decode_inbound(const nlohmann::json& msg);

}  // namespace travlearn
