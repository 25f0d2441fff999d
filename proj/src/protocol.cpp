#include "spinesim/protocol.hpp"

#include "spinesim/base64.hpp"
#include "spinesim/error.hpp"
#include "spinesim/json_util.hpp"
#include "spinesim/planner.hpp"

namespace spinesim {

using nlohmann::json;

std::string encode_frame(std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) contract_error("frame_too_large", "payload exceeds frame cap");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out(4 + payload.size(), '\0');
  out[0] = static_cast<char>((n >> 24) & 0xFF);
  out[1] = static_cast<char>((n >> 16) & 0xFF);
  out[2] = static_cast<char>((n >> 8) & 0xFF);
  out[3] = static_cast<char>(n & 0xFF);
  std::copy(payload.begin(), payload.end(), out.begin() + 4);
  return out;
}

void FrameDecoder::feed(const char* data, std::size_t len) {
  if (failed_) return;
  buf_.append(data, len);
  std::size_t pos = 0;
  while (buf_.size() - pos >= 4) {
    const auto* p = reinterpret_cast<const unsigned char*>(buf_.data() + pos);
    const std::uint32_t n = (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
                            (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
    if (n > kMaxFrameBytes) {
      failed_ = true;
      rejected_ = n;
      buf_.clear();
      return;
    }
    if (buf_.size() - pos - 4 < n) break;
    ready_.emplace_back(buf_, pos + 4, n);
    pos += 4 + n;
  }
  buf_.erase(0, pos);
}

std::optional<std::string> FrameDecoder::next() {
  if (ready_.empty()) return std::nullopt;
  std::string f = std::move(ready_.front());
  ready_.pop_front();
  return f;
}

std::vector<std::string> split_frames(std::string_view bytes) {
  FrameDecoder d;
  d.feed(bytes);
  if (d.failed()) contract_error("frame_too_large", "frame length exceeds cap");
  if (d.buffered() != 0) contract_error("truncated_frame", "trailing bytes after last frame");
  std::vector<std::string> out;
  while (auto f = d.next()) out.push_back(std::move(*f));
  return out;
}

json error_message(const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"version", kProtocolVersion}, {"code", code}, {"message", message}};
}

json RolloutResult::to_json() const {
  json j = {{"grade", std::string(1, grade_letter(report.grade))},
            {"max_breach_mm", report.max_breach_mm},
            {"extra_pedicular", report.extra_pedicular},
            {"angular_offset_deg", angular_offset_deg},
            {"trajectory", spinesim::to_json(trajectory)},
            {"reference", spinesim::to_json(reference)},
            {"steps", steps}};
  j["entry_distance_mm"] = entry_distance_mm ? json(*entry_distance_mm) : json(nullptr);
  return j;
}

RolloutResult grade_rollout(const Scenario& sc, const Trajectory& traj, const Trajectory& reference,
                            int steps) {
  RolloutResult r;
  r.trajectory = traj;
  r.reference = reference;
  r.steps = steps;
  r.angular_offset_deg = angular_offset(traj, reference);
  if (!(traj.depth_mm > 0.0)) {
    // Never inserted: nothing entered bone.
    r.report.grade = Grade::E;
    r.report.extra_pedicular = true;
    return r;
  }
  r.report = assess_cannula(*sc.mesh, traj, sc.cannula_radius_mm, sc.criteria.sampling);
  try {
    r.entry_distance_mm = entry_point_distance(traj, reference, *sc.mesh);
  } catch (const Error& e) {
    if (e.code() != "misses_mesh") throw;
  }
  return r;
}

RolloutService::RolloutService(std::vector<Scenario> scenarios) {
  for (auto& s : scenarios) {
    const std::string id = s.id;
    if (!scenarios_.emplace(id, std::move(s)).second) {
      contract_error("duplicate_scenario", "scenario id '" + id + "' loaded twice");
    }
  }
}

const Scenario* RolloutService::find(const std::string& id) const {
  auto it = scenarios_.find(id);
  return it == scenarios_.end() ? nullptr : &it->second;
}

std::vector<std::string> RolloutService::scenario_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, s] : scenarios_) ids.push_back(id);
  return ids;
}

namespace {

ObservationConfig observation_from_json(const json& j, const ObservationConfig& base) {
  ObservationConfig c = base;
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    ObservationConfig preset;
    if (name == "full") preset = ObservationConfig::full();
    else if (name == "no_crop") preset = ObservationConfig::no_crop();
    else if (name == "ap_only") preset = ObservationConfig::ap_only();
    else if (name == "lateral_only") preset = ObservationConfig::lateral_only();
    else contract_error("invalid_observation", "unknown observation config '" + name + "'");
    c.ap = preset.ap;
    c.lateral = preset.lateral;
    c.crops = preset.crops;
    return c;
  }
  if (!j.is_object()) contract_error("malformed_message", "observation must be a name or object");
  c.ap = j.value("ap", c.ap);
  c.lateral = j.value("lateral", c.lateral);
  c.crops = j.value("crops", c.crops);
  if (!c.ap && !c.lateral) contract_error("invalid_observation", "observation needs at least one view");
  return c;
}

const json& field(const json& req, const char* key) {
  auto it = req.find(key);
  if (it == req.end()) contract_error("malformed_message", std::string("missing field '") + key + "'");
  return *it;
}

std::uint64_t seed_from_json(const json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
  contract_error("malformed_message", "seed must be a non-negative integer");
}

}  // namespace

std::string Connection::handle(std::string_view request) {
  json req;
  try {
    req = json::parse(request);
  } catch (const json::parse_error& e) {
    return error_message("malformed_message", "request is not valid JSON").dump();
  }
  return handle_json(req).dump();
}

json Connection::handle_json(const json& req) {
  try {
    if (!req.is_object()) contract_error("malformed_message", "request must be a JSON object");
    const json& v = field(req, "version");
    if (!v.is_number_integer() || v.get<std::int64_t>() != kProtocolVersion) {
      contract_error("unsupported_version", "only protocol version 1 is supported");
    }
    const json& t = field(req, "type");
    if (!t.is_string()) contract_error("malformed_message", "type must be a string");
    const auto type = t.get<std::string>();
    if (type == "reset") return on_reset(req);
    if (type == "step") return on_step(req);
    if (type == "terminate") return on_terminate(req);
    if (type == "result") return on_result(req);
    contract_error("unknown_type", "unknown message type '" + type + "'");
  } catch (const Error& e) {
    return error_message(e.code(), e.what());
  } catch (const json::exception& e) {
    return error_message("malformed_message", e.what());
  } catch (const std::exception& e) {
    return error_message("internal_error", e.what());
  }
}

json Connection::observation_reply(const SessionState& s) const {
  const ObservationSet obs = observation_set(
      imaging_context(s.scene, s.state),
      s.state.cannula(s.scene.cannula_radius_mm, s.scene.cannula_attenuation_per_mm), s.observation);
  const EncodedObservation enc = encode_observation(obs);
  json images = json::object();
  for (int i = 0; i < 4; ++i) {
    if (enc[i]) images[std::string(slot_name(static_cast<ObservationSlot>(i)))] = base64_encode(*enc[i]);
  }
  return {{"type", "observation"},
          {"version", kProtocolVersion},
          {"session", s.id},
          {"step", s.step},
          {"done", s.done},
          {"phase", phase_name(s.state.phase)},
          {"images", images}};
}

json Connection::on_reset(const json& req) {
  const json& sid = field(req, "scenario");
  if (!sid.is_string()) contract_error("malformed_message", "scenario must be a string");
  const Scenario* sc = service_->find(sid.get<std::string>());
  if (!sc) contract_error("unknown_scenario", "no scenario '" + sid.get<std::string>() + "'");

  const InitMode mode = parse_init_mode(req.value("init_mode", std::string("randomized")));
  const std::uint64_t seed = req.contains("seed") ? seed_from_json(req.at("seed")) : 0;
  const Side side = parse_side(req.value("side", std::string("left")));
  const ObservationConfig obs =
      req.contains("observation") ? observation_from_json(req.at("observation"), sc->observation)
                                  : sc->observation;

  const PlanOutcome* plan = sc->plan_for(sc->level, side);
  if (!plan || !plan->selection.selected) {
    contract_error("plan_missing", "scenario has no reference plan for " + sc->level + " " + side_name(side));
  }

  SessionState s;
  s.id = std::to_string(next_session_);
  s.scenario = sc;
  s.scene = sc->expert_scene(side, *plan->selection.trajectory());
  s.observation = obs;
  s.state = initial_state(s.scene, mode, seed);
  json reply = observation_reply(s);
  // Only commit once everything succeeded, so a failed reset leaves the old session intact.
  ++next_session_;
  session_ = std::move(s);
  return reply;
}

SessionState& Connection::live_session(const json& req) {
  const json& sid = field(req, "session");
  if (!sid.is_string()) contract_error("malformed_message", "session must be a string");
  if (!session_ || session_->id != sid.get<std::string>()) {
    contract_error("stale_session", "session '" + sid.get<std::string>() + "' is not live on this connection");
  }
  return *session_;
}

void Connection::finish(SessionState& s) {
  s.done = true;
  s.result = grade_rollout(*s.scenario, s.state.trajectory(), s.scene.plan, s.step);
}

json Connection::on_step(const json& req) {
  SessionState& s = live_session(req);
  if (s.done) contract_error("stale_session", "session '" + s.id + "' is already done");
  const json& a = field(req, "action");
  if (!a.is_array() || a.size() != DeltaAction::kSize) {
    contract_error("malformed_message", "action must be an array of 11 numbers");
  }
  std::array<float, DeltaAction::kSize> arr{};
  for (int i = 0; i < DeltaAction::kSize; ++i) {
    if (!a[i].is_number()) contract_error("malformed_message", "action entries must be numbers");
    arr[i] = static_cast<float>(a[i].get<double>());
  }
  const DeltaAction act = DeltaAction::from_array(arr);
  s.state = apply_action(s.state, act);
  ++s.step;
  if (s.step >= s.scene.episode_length) finish(s);
  return observation_reply(s);
}

json Connection::on_terminate(const json& req) {
  SessionState& s = live_session(req);
  if (!s.done) finish(s);
  return {{"type", "terminated"}, {"version", kProtocolVersion}, {"session", s.id}, {"step", s.step}};
}

json Connection::on_result(const json& req) {
  SessionState& s = live_session(req);
  if (!s.done) contract_error("not_done", "session '" + s.id + "' has not finished");
  json j = s.result->to_json();
  j["type"] = "result";
  j["version"] = kProtocolVersion;
  j["session"] = s.id;
  return j;
}

}  // namespace spinesim
