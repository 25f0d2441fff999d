#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spinesim/error.hpp"
#include "spinesim/protocol.hpp"
#include "support.hpp"

#include <functional>

using namespace spinesim;
using nlohmann::json;

namespace {

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

const RolloutService& service() {
  static const RolloutService s({testing::small_corridor()});
  return s;
}

json reset_msg(const std::string& mode = "midline", std::uint64_t seed = 0, const std::string& side = "left") {
  return {{"type", "reset"}, {"version", 1}, {"scenario", "corridor-small"},
          {"init_mode", mode}, {"seed", seed}, {"side", side}};
}

json step_msg(const std::string& session, const DeltaAction& a) {
  json arr = json::array();
  for (float v : a.to_array()) arr.push_back(v);
  return {{"type", "step"}, {"version", 1}, {"session", session}, {"action", arr}};
}

json simple(const std::string& type, const std::string& session) {
  return {{"type", type}, {"version", 1}, {"session", session}};
}

std::string header(std::uint32_t n) {
  std::string h(4, '\0');
  for (int i = 0; i < 4; ++i) h[i] = static_cast<char>((n >> (24 - 8 * i)) & 0xff);
  return h;
}

EpisodeRecord expert(Side side, InitMode mode, std::uint64_t seed) {
  const Scenario& sc = *service().find("corridor-small");
  ExpertScene scene = sc.expert_scene(side, *sc.plan_for(sc.level, side)->selection.trajectory());
  scene.render = false;
  return synthesize_expert(scene, mode, seed);
}

}  // namespace

TEST_CASE("frame encoding") {
  const std::string f = encode_frame("hello");
  CHECK(f.size() == 9);
  CHECK(f.substr(0, 4) == header(5));
  CHECK(f.substr(4) == "hello");
  CHECK(encode_frame("").size() == 4);

  const auto frames = split_frames(encode_frame("a") + encode_frame("") + encode_frame("xyz"));
  REQUIRE(frames.size() == 3);
  CHECK(frames[0] == "a");
  CHECK(frames[1].empty());
  CHECK(frames[2] == "xyz");
  CHECK(error_code([&] { split_frames(encode_frame("abc").substr(0, 5)); }) == "truncated_frame");
  CHECK(error_code([&] { split_frames(header(kMaxFrameBytes + 1)); }) == "frame_too_large");
}

TEST_CASE("frame decoder handles split and oversized input") {
  FrameDecoder d;
  const std::string bytes = encode_frame("first") + encode_frame("second");
  for (char c : bytes) d.feed(&c, 1);
  CHECK(*d.next() == "first");
  CHECK(*d.next() == "second");
  CHECK_FALSE(d.next().has_value());
  CHECK(d.buffered() == 0);

  FrameDecoder partial;
  partial.feed(encode_frame("abcdef").substr(0, 7));
  CHECK_FALSE(partial.next().has_value());
  CHECK(partial.buffered() == 7);

  FrameDecoder big;
  big.feed(header(kMaxFrameBytes + 1));
  CHECK(big.failed());
  CHECK(big.rejected_length() == kMaxFrameBytes + 1);
  // Exactly the cap is still allowed.
  FrameDecoder edge;
  edge.feed(header(kMaxFrameBytes));
  CHECK_FALSE(edge.failed());
}

TEST_CASE("request validation errors") {
  Connection c(service());
  const auto code = [&](const json& m) {
    const json r = c.handle_json(m);
    CHECK(r["type"] == "error");
    CHECK(r["version"] == 1);
    return r["code"].get<std::string>();
  };
  CHECK(json::parse(c.handle("not json"))["code"] == "malformed_message");
  CHECK(code(json::array()) == "malformed_message");
  CHECK(code({{"type", "reset"}, {"scenario", "corridor-small"}}) == "malformed_message");
  CHECK(code({{"type", "reset"}, {"version", 2}, {"scenario", "corridor-small"}}) == "unsupported_version");
  CHECK(code({{"type", "dance"}, {"version", 1}}) == "unknown_type");
  json unknown = reset_msg();
  unknown["scenario"] = "nope";
  CHECK(code(unknown) == "unknown_scenario");
  json badmode = reset_msg();
  badmode["init_mode"] = "sideways";
  CHECK(code(badmode) == "invalid_init_mode");
  json badobs = reset_msg();
  badobs["observation"] = "everything";
  CHECK(code(badobs) == "invalid_observation");
  json badseed = reset_msg();
  badseed["seed"] = -3;
  CHECK(code(badseed) == "malformed_message");
  CHECK(code(simple("step", "1")) == "stale_session");
  CHECK(code(simple("result", "1")) == "stale_session");
  CHECK_FALSE(c.session().has_value());
}

TEST_CASE("reset, step and result flow") {
  Connection c(service());
  const json r = c.handle_json(reset_msg());
  REQUIRE(r["type"] == "observation");
  CHECK(r["session"] == "1");
  CHECK(r["step"] == 0);
  CHECK(r["done"] == false);
  CHECK(r["phase"] == "navigation");
  for (const char* k : {"ap", "lat", "ap_crop", "lat_crop"}) CHECK(r["images"].contains(k));

  CHECK(c.handle_json(simple("result", "1"))["code"] == "not_done");

  // A double one-hot is refused and leaves the session where it was.
  json bad = step_msg("1", DeltaAction{});
  bad["action"][8] = 1.0;
  CHECK(c.handle_json(bad)["code"] == "bad_one_hot");
  json shortact = step_msg("1", DeltaAction{});
  shortact["action"].erase(0);
  CHECK(c.handle_json(shortact)["code"] == "malformed_message");
  CHECK(c.session()->step == 0);

  const json s1 = c.handle_json(step_msg("1", DeltaAction{}));
  CHECK(s1["step"] == 1);
  CHECK(c.handle_json(step_msg("2", DeltaAction{}))["code"] == "stale_session");

  const json t = c.handle_json(simple("terminate", "1"));
  CHECK(t["type"] == "terminated");
  CHECK(t["step"] == 1);
  CHECK(c.handle_json(step_msg("1", DeltaAction{}))["code"] == "stale_session");
  const json res = c.handle_json(simple("result", "1"));
  CHECK(res["type"] == "result");
  // Never inserted.
  CHECK(res["grade"] == "E");
  CHECK(res["extra_pedicular"] == true);
  CHECK(res["entry_distance_mm"].is_null());

  // The next reset gets the next id on this connection.
  CHECK(c.handle_json(reset_msg())["session"] == "2");
}

TEST_CASE("observation subsets") {
  Connection c(service());
  json m = reset_msg();
  m["observation"] = "ap_only";
  const json r = c.handle_json(m);
  CHECK(r["images"].contains("ap"));
  CHECK(r["images"].contains("ap_crop"));
  CHECK_FALSE(r["images"].contains("lat"));
  CHECK_FALSE(r["images"].contains("lat_crop"));
  m["observation"] = "no_crop";
  const json n = c.handle_json(m);
  CHECK(n["images"].size() == 2);
  CHECK_FALSE(n["images"].contains("ap_crop"));
  m["observation"] = {{"ap", false}, {"lateral", true}, {"crops", true}};
  CHECK(c.handle_json(m)["images"].size() == 2);
}

TEST_CASE("midline resets are deterministic across connections") {
  Connection a(service()), b(service());
  CHECK(a.handle(reset_msg().dump()) == b.handle(reset_msg().dump()));
  DeltaAction mv;
  mv.translation_mm = {0.5, -0.25, 1};
  CHECK(a.handle(step_msg("1", mv).dump()) == b.handle(step_msg("1", mv).dump()));
  // Randomized resets depend on the seed.
  Connection c(service()), d(service());
  CHECK(c.handle(reset_msg("randomized", 3).dump()) == d.handle(reset_msg("randomized", 3).dump()));
  CHECK(c.handle(reset_msg("randomized", 4).dump()) != d.handle(reset_msg("randomized", 3).dump()));
}

TEST_CASE("expert actions replayed through the protocol grade A") {
  for (Side side : {Side::Left, Side::Right}) {
    const EpisodeRecord rec = expert(side, InitMode::Randomized, 21);
    Connection c(service());
    json r = c.handle_json(reset_msg("randomized", 21, side_name(side)));
    const std::string sid = r["session"];
    for (std::size_t i = 0; i < rec.actions.size(); ++i) {
      r = c.handle_json(step_msg(sid, rec.actions[i]));
      REQUIRE(r["type"] == "observation");
      CHECK(r["done"] == (i + 1 == rec.actions.size()));
    }
    CHECK(r["phase"] == "insertion");
    const json res = c.handle_json(simple("result", sid));
    CHECK(res["grade"] == "A");
    CHECK(res["steps"] == 200);
    CHECK(res["entry_distance_mm"].get<double>() < 0.5);
    CHECK(res["angular_offset_deg"].get<double>() < 0.1);
    CHECK(c.handle_json(step_msg(sid, DeltaAction{}))["code"] == "stale_session");
  }
}

TEST_CASE("grade_rollout on a trajectory that misses the mesh") {
  const Scenario& sc = *service().find("corridor-small");
  const Trajectory ref = *sc.plan_for("L1", Side::Left)->selection.trajectory();
  const Trajectory away{Vec3(500, 500, 500), Vec3::UnitY(), 10};
  const RolloutResult r = grade_rollout(sc, away, ref, 200);
  CHECK(r.report.grade == Grade::E);
  CHECK_FALSE(r.entry_distance_mm.has_value());
  CHECK(r.to_json()["entry_distance_mm"].is_null());
}

TEST_CASE("TCP server: malformed frames do not disturb other sessions") {
  RolloutServer server(service(), 0);
  server.start();
  REQUIRE(server.port() > 0);

  RolloutClient good("127.0.0.1", server.port());
  const json r = good.request(reset_msg());
  REQUIRE(r["type"] == "observation");

  {
    RolloutClient bad("127.0.0.1", server.port());
    // Garbage JSON inside a valid frame: typed error, connection stays usable.
    CHECK(json::parse(bad.request(std::string_view("{oops")))["code"] == "malformed_message");
    CHECK(bad.request(reset_msg())["type"] == "observation");
    // An absurd length prefix: typed error, then the server drops this connection.
    bad.send_raw(header(0xfffffff0u));
    CHECK(json::parse(bad.read_frame())["code"] == "frame_too_large");
    CHECK(error_code([&] { bad.read_frame(); }) == "connection_closed");
  }

  // The first session carries on.
  DeltaAction mv;
  mv.translation_mm = {1, 0, 0};
  const json s = good.request(step_msg("1", mv));
  CHECK(s["type"] == "observation");
  CHECK(s["step"] == 1);

  // Over TCP the replies match the in-process state machine byte for byte.
  Connection local(service());
  RolloutClient fresh("127.0.0.1", server.port());
  const std::string msg = reset_msg().dump();
  CHECK(fresh.request(std::string_view(msg)) == local.handle(msg));

  server.stop();
  CHECK(error_code([] { RolloutServer(service(), 70000); }) == "invalid_port");
}
