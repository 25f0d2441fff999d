#pragma once

#include "spinesim/episode.hpp"
#include "spinesim/safety.hpp"
#include "spinesim/scenario.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spinesim {

constexpr int kProtocolVersion = 1;
constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

/// 4-byte big-endian length followed by the payload.
std::string encode_frame(std::string_view payload);

/// Incremental frame splitter. A length prefix above kMaxFrameBytes puts the
/// decoder into a failed state; the caller should report and drop the stream.
class FrameDecoder {
 public:
  void feed(const char* data, std::size_t len);
  void feed(std::string_view s) { feed(s.data(), s.size()); }
  std::optional<std::string> next();
  bool failed() const { return failed_; }
  std::uint32_t rejected_length() const { return rejected_; }
  std::size_t buffered() const { return buf_.size(); }

 private:
  std::string buf_;
  std::deque<std::string> ready_;
  bool failed_ = false;
  std::uint32_t rejected_ = 0;
};

/// Splits a whole byte string into frames; throws Error("truncated_frame")
/// on trailing bytes and Error("frame_too_large") past the cap.
std::vector<std::string> split_frames(std::string_view bytes);

nlohmann::json error_message(const std::string& code, const std::string& message);

/// Graded outcome of a finished session.
struct RolloutResult {
  BreachReport report;
  std::optional<double> entry_distance_mm;
  double angular_offset_deg = 0.0;
  Trajectory trajectory;
  Trajectory reference;
  int steps = 0;

  nlohmann::json to_json() const;
};

/// Grades a final trajectory against a reference plan on the scenario mesh,
/// exactly as the server does when a session finishes.
RolloutResult grade_rollout(const Scenario& sc, const Trajectory& traj, const Trajectory& reference,
                            int steps);

struct SessionState {
  std::string id;
  const Scenario* scenario = nullptr;
  ExpertScene scene;
  ObservationConfig observation;
  SceneState state;
  int step = 0;
  bool done = false;
  std::optional<RolloutResult> result;
};

/// Immutable set of scenarios shared by every connection.
class RolloutService {
 public:
  explicit RolloutService(std::vector<Scenario> scenarios);

  const Scenario* find(const std::string& id) const;
  std::vector<std::string> scenario_ids() const;

 private:
  std::map<std::string, Scenario> scenarios_;
};

/// Per-connection protocol state machine. Holds at most one live session;
/// session ids count up from "1" within the connection, so identical request
/// transcripts yield identical reply transcripts.
class Connection {
 public:
  explicit Connection(const RolloutService& service) : service_(&service) {}

  /// Handles one request payload and returns the reply payload. Never throws
  /// for bad input; every failure becomes an error reply.
  std::string handle(std::string_view request);
  nlohmann::json handle_json(const nlohmann::json& request);

  const std::optional<SessionState>& session() const { return session_; }

 private:
  nlohmann::json on_reset(const nlohmann::json& req);
  nlohmann::json on_step(const nlohmann::json& req);
  nlohmann::json on_terminate(const nlohmann::json& req);
  nlohmann::json on_result(const nlohmann::json& req);
  SessionState& live_session(const nlohmann::json& req);
  nlohmann::json observation_reply(const SessionState& s) const;
  void finish(SessionState& s);

  const RolloutService* service_;
  std::optional<SessionState> session_;
  std::uint64_t next_session_ = 1;
};

/// Blocking TCP server, one thread per connection.
class RolloutServer {
 public:
  /// Binds immediately (port 0 picks an ephemeral port); throws
  /// Error("bind_failed") / Error("invalid_port") as Io errors.
  RolloutServer(const RolloutService& service, int port, const std::string& host = "127.0.0.1");
  ~RolloutServer();
  RolloutServer(const RolloutServer&) = delete;
  RolloutServer& operator=(const RolloutServer&) = delete;

  int port() const { return port_; }
  void start();
  /// Stops accepting, shuts down live connections and joins every thread.
  void stop();
  /// Blocks until stop() is called from elsewhere.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

/// Synchronous client for one connection.
class RolloutClient {
 public:
  RolloutClient(const std::string& host, int port);
  ~RolloutClient();
  RolloutClient(const RolloutClient&) = delete;
  RolloutClient& operator=(const RolloutClient&) = delete;

  /// Sends raw bytes without framing (used to inject malformed input).
  void send_raw(std::string_view bytes);
  void send_frame(std::string_view payload);
  /// Blocks for the next reply frame; throws Error("connection_closed").
  std::string read_frame();
  std::string request(std::string_view payload);
  nlohmann::json request(const nlohmann::json& msg);

 private:
  int fd_ = -1;
  FrameDecoder decoder_;
};

}  // namespace spinesim
