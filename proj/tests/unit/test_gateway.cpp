#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "decoy/gateway.hpp"
#include "test_util.hpp"

using namespace decoy;
using nlohmann::json;
using P = PermissionKind;

namespace {

struct SseEvent {
  std::uint64_t id = 0;
  json data;
};

std::vector<SseEvent> parse_sse(const std::string& body) {
  std::vector<SseEvent> out;
  std::size_t pos = 0;
  while (true) {
    const auto end = body.find("\n\n", pos);
    if (end == std::string::npos) break;
    const auto block = body.substr(pos, end - pos);
    pos = end + 2;
    SseEvent ev;
    std::istringstream lines(block);
    std::string line;
    bool any = false;
    while (std::getline(lines, line)) {
      if (line.rfind("id: ", 0) == 0) ev.id = std::stoull(line.substr(4));
      if (line.rfind("data: ", 0) == 0) {
        ev.data = json::parse(line.substr(6));
        any = true;
      }
    }
    if (any) out.push_back(ev);
  }
  return out;
}

class Gateway : public ::testing::Test {
 protected:
  void SetUp() override {
    service = std::make_unique<Service>(home.path());
    gateway = std::make_unique<HttpGateway>(*service);
    port = gateway->start("127.0.0.1", 0);
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(30, 0);
  }
  void TearDown() override {
    gateway->stop();
    gateway.reset();
    service.reset();
  }

  json get_json(const std::string& path, int expect = 200) {
    auto r = client->Get(path);
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    return json::parse(r->body);
  }
  json post_json(const std::string& path, const json& body, int expect) {
    auto r = client->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    return json::parse(r->body);
  }
  void run(const std::string& name) {
    post_json("/scenarios/" + name + "/start", json::object(), 202);
    service->wait(name);
  }

  decoy::testing::TempDir home;
  std::unique_ptr<Service> service;
  std::unique_ptr<HttpGateway> gateway;
  std::unique_ptr<httplib::Client> client;
  int port = 0;
};

}  // namespace

TEST_F(Gateway, ListsAppsAndScenarios) {
  const auto apps = get_json("/apps");
  EXPECT_EQ(apps.size(), catalog().size());
  for (const auto& a : apps) {
    EXPECT_TRUE(a.contains("app"));
    EXPECT_TRUE(a["granted"].is_array());
  }
  const auto sc = get_json("/scenarios");
  ASSERT_EQ(sc.size(), catalog().size());
  EXPECT_EQ(sc[0]["running"], false);
}

TEST_F(Gateway, PoliciesRoundTrip) {
  auto doc = get_json("/policies");
  EXPECT_EQ(doc["version"], 0);
  DeceitPolicy p;
  p.app_id = "com.example.notes";
  p.permission = P::Clipboard;
  p.action = SpoofStatic{ClipData{"dummyLabel", "dummyText"}};
  p.context = ContextCondition::manual("blockClipboard");
  doc["policies"] = json::array({policy_to_json(p)});
  doc["toggles"] = {{"blockClipboard", true}};
  auto r = client->Put("/policies", doc.dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["version"], 1);
  const auto back = document_from_json(get_json("/policies"));
  ASSERT_EQ(back.policies.size(), 1u);
  EXPECT_EQ(back.policies[0], p);
  EXPECT_TRUE(back.toggles.at("blockClipboard"));
  EXPECT_EQ(service->store().version(), 1);
}

TEST_F(Gateway, ErrorsAreJsonWithHttpStatus) {
  auto r = client->Put("/policies", "{ nope", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  auto j = json::parse(r->body);
  EXPECT_EQ(j["code"], 400);
  EXPECT_TRUE(j["error"].is_string());

  json bad = {{"policies", json::array({{{"app", "*"},
                                         {"permission", "Camera"},
                                         {"action", {{"kind", "FixedLocation"}, {"lat", 1}, {"lon", 2}}},
                                         {"context", {{"kind", "Always"}}},
                                         {"enabled", true}}})}};
  r = client->Put("/policies", bad.dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400) << r->body;
  EXPECT_EQ(service->store().version(), 0);

  EXPECT_EQ(get_json("/nowhere", 404)["code"], 404);
  post_json("/scenarios/nope/start", json::object(), 404);
  post_json("/scenarios/nope/stop", json::object(), 404);
  post_json("/alerts/nope/apply", json::object(), 404);
  post_json("/scenarios/geospot/start", {{"realtime_factor", -1}}, 400);
  r = client->Get("/logs/stream?from=abc&follow=false");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
}

TEST_F(Gateway, StartStopConflicts) {
  post_json("/scenarios/geospot/stop", json::object(), 409);
  post_json("/scenarios/geospot/start", {{"seed", 3}, {"realtime_factor", 1.0}}, 202);
  EXPECT_TRUE(service->running("geospot"));
  post_json("/scenarios/geospot/start", json::object(), 409);
  const auto sc = get_json("/scenarios");
  for (const auto& s : sc) {
    if (s["name"] == "geospot") {
      EXPECT_EQ(s["running"], true);
    }
  }
  post_json("/scenarios/geospot/stop", json::object(), 200);
  service->wait("geospot");
  EXPECT_FALSE(service->running("geospot"));
  post_json("/scenarios/geospot/stop", json::object(), 409);
  // A stopped scenario can start again.
  post_json("/scenarios/geospot/start", json::object(), 202);
  service->wait("geospot");
}

TEST_F(Gateway, LogStreamIsOrderedGapFreeAndResumable) {
  run("sms-fraud");
  run("clipboard-notes");
  const auto last = service->log()->last_seq();
  ASSERT_GT(last, 5u);

  auto r = client->Get("/logs/stream?follow=false");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_NE(r->get_header_value("Content-Type").find("text/event-stream"), std::string::npos);
  const auto all = parse_sse(r->body);
  ASSERT_EQ(all.size(), last);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].id, i + 1);
    EXPECT_EQ(all[i].data["seq"], i + 1);
  }

  r = client->Get("/logs/stream?follow=false", {{"Last-Event-ID", "3"}});
  ASSERT_TRUE(r);
  const auto resumed = parse_sse(r->body);
  ASSERT_EQ(resumed.size(), last - 3);
  EXPECT_EQ(resumed.front().id, 4u);

  r = client->Get("/logs/stream?from=" + std::to_string(last) + "&follow=false");
  ASSERT_TRUE(r);
  EXPECT_TRUE(parse_sse(r->body).empty());
}

TEST_F(Gateway, FollowStreamDeliversLiveEntries) {
  run("clipboard-notes");
  const auto before = service->log()->last_seq();
  std::string buffer;
  std::uint64_t highest = 0;
  std::thread producer;
  bool started = false;
  httplib::Client c("127.0.0.1", port);
  c.set_read_timeout(30, 0);
  const auto target = before + 40;  // auth-app produces 40 entries
  auto res = c.Get("/logs/stream?from=" + std::to_string(before), httplib::Headers{},
                   [&](const char* data, std::size_t len) {
                     if (!started) {
                       started = true;
                       producer = std::thread([&] { run("auth-app"); });
                     }
                     buffer.append(data, len);
                     for (const auto& ev : parse_sse(buffer)) highest = std::max(highest, ev.id);
                     return highest < target;
                   });
  if (producer.joinable()) producer.join();
  EXPECT_EQ(highest, target);
  const auto events = parse_sse(buffer);
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].id, before + 1 + i);
}

TEST_F(Gateway, ApplyingAnAlertMitigatesOnTheNextRun) {
  run("sms-fraud");
  const auto alerts = get_json("/alerts");
  const std::string id = "SmsSendNoInteraction:com.example.privatesms";
  bool found = false;
  for (const auto& a : alerts) found = found || a["id"] == id;
  ASSERT_TRUE(found) << alerts.dump();

  const auto applied = post_json("/alerts/SmsSendNoInteraction%3Acom.example.privatesms/apply", json::object(), 200);
  EXPECT_EQ(applied["version"], 1);
  ASSERT_EQ(applied["applied"].size(), 1u);
  EXPECT_EQ(applied["applied"][0]["permission"], "SmsSend");

  const auto from = service->log()->last_seq();
  run("sms-fraud");
  int sends = 0, reads = 0;
  for (const auto& e : service->log()->entries_after(from)) {
    if (e.permission == P::SmsSend) {
      EXPECT_EQ(e.action, AccessAction::Blocked);
      ++sends;
    }
    if (e.permission == P::SmsRead) {
      EXPECT_EQ(e.action, AccessAction::Original);
      ++reads;
    }
  }
  EXPECT_EQ(sends, 3);
  EXPECT_EQ(reads, 4);
  for (const auto& a : get_json("/alerts")) EXPECT_NE(a["id"], id);
}

TEST_F(Gateway, CoverageJsonAndCsv) {
  run("uber-like");
  const auto j = get_json("/coverage");
  ASSERT_TRUE(j.contains("rows"));
  auto r = client->Get("/coverage?format=csv");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body.rfind("app,permission,status\n", 0), 0u);
  const auto m = CoverageMatrix::from_csv(r->body);
  EXPECT_EQ(m.at("com.example.ride", P::Location), CoverageStatus::Failed);
  EXPECT_EQ(m.at("com.example.ride", P::Contacts), CoverageStatus::GrantedNotUsed);
}

TEST_F(Gateway, OnlyLoopbackTraffic) {
  get_json("/apps");
  EXPECT_GT(net_audit::loopback_connections(), 0u);
  EXPECT_EQ(net_audit::outbound_connections(), 0u);
  HttpGateway other(*service);
  EXPECT_DECOY_ERROR(other.start("0.0.0.0", 0), ErrorCode::InvalidArgument);
  EXPECT_DECOY_ERROR(other.start("192.168.1.10", 0), ErrorCode::InvalidArgument);
  EXPECT_DECOY_ERROR(gateway->start("127.0.0.1", 0), ErrorCode::InvalidArgument);
}

TEST(NetAudit, LoopbackClassification) {
  for (const auto* h : {"127.0.0.1", "127.8.9.1", "localhost", "::1", "::ffff:127.0.0.1"})
    EXPECT_TRUE(net_audit::is_loopback(h)) << h;
  for (const auto* h : {"0.0.0.0", "10.0.0.1", "::", "example.com", "", "128.0.0.1"})
    EXPECT_FALSE(net_audit::is_loopback(h)) << h;
}

TEST(ServiceSession, PersistsAndResets) {
  decoy::testing::TempDir home;
  std::vector<std::string> ids;
  std::uint64_t last = 0;
  {
    Service s(home.path());
    s.run_now("bus-sim", std::nullopt);
    s.run_now("clipboard-notes", std::nullopt);
    s.save_session();
    for (const auto& a : s.alerts()) ids.push_back(a.id());
    last = s.log()->last_seq();
  }
  EXPECT_TRUE(std::filesystem::exists(home.path() / "log.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(home.path() / "session.json"));
  {
    Service s(home.path());
    EXPECT_EQ(s.log()->last_seq(), last);
    std::vector<std::string> again;
    for (const auto& a : s.alerts()) again.push_back(a.id());
    EXPECT_EQ(again, ids);
    EXPECT_EQ(again, std::vector<std::string>{"BgSensorAccess:com.example.bussim"});
    s.run_now("clipboard-notes", std::nullopt);
    EXPECT_GT(s.log()->last_seq(), last);
    s.reset_session();
    EXPECT_EQ(s.log()->size(), 0u);
    EXPECT_TRUE(s.alerts().empty());
  }
  Service s(home.path());
  EXPECT_EQ(s.log()->size(), 0u);
}

TEST(ServiceSession, LatestRunPerAppWins) {
  decoy::testing::TempDir home;
  Service s(home.path());
  s.run_now("sms-fraud", std::nullopt);
  ASSERT_EQ(s.alerts().size(), 1u);
  DeceitPolicy p;
  p.app_id = "com.example.privatesms";
  p.permission = P::SmsSend;
  p.action = Block{};
  s.store().set_policy(p);
  s.run_now("sms-fraud", std::nullopt);
  EXPECT_TRUE(s.alerts().empty());
  EXPECT_EQ(s.coverage().at("com.example.privatesms", P::SmsSend), CoverageStatus::Deceived);
  EXPECT_DECOY_ERROR(s.run_now("nope", std::nullopt), ErrorCode::UnknownScenario);
}
