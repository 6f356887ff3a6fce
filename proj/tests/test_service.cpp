#include <thread>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "espresso/service.hpp"

using namespace espresso;
using espresso::service::ServiceState;

namespace {

ServiceState fixture_state() {
  const auto world = synthetic::make_world({});
  auto model = train_projection(world.pairs, world.table, {});
  return service::make_state(world.catalog, std::move(model), world.table);
}

const ServiceState& shared_state() {
  static const ServiceState state = fixture_state();
  return state;
}

std::string known_text() { return synthetic::word_name(0) + ", " + synthetic::word_name(3) + " " + synthetic::word_name(5); }

}  // namespace

TEST(ServiceHandlers, Health) {
  const auto& state = shared_state();
  const auto r = service::handle_health(state);
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["status"], "ok");
  EXPECT_EQ(r.body["version"], kVersion);
  EXPECT_EQ(r.body["model_fingerprint"], state.model.config_fingerprint);
}

TEST(ServiceHandlers, PiecesAndPerformances) {
  const auto& state = shared_state();
  const auto pieces = service::handle_pieces(state);
  EXPECT_EQ(pieces.status, 200);
  ASSERT_EQ(pieces.body["pieces"].size(), 6u);
  EXPECT_EQ(pieces.body["pieces"][0]["performance_count"], 5);

  const auto perfs = service::handle_performances(state, "piece2");
  EXPECT_EQ(perfs.status, 200);
  ASSERT_EQ(perfs.body["performances"].size(), 5u);
  EXPECT_EQ(perfs.body["performances"][0]["artist_label"], "Artist 1");

  const auto missing = service::handle_performances(state, "xyz");
  EXPECT_EQ(missing.status, 404);
  EXPECT_EQ(missing.body["code"], "unknown_piece");
  EXPECT_TRUE(missing.body.contains("message"));
  EXPECT_TRUE(missing.body.contains("details"));
}

TEST(ServiceHandlers, QueryMatchesLibrary) {
  const auto& state = shared_state();
  const nlohmann::json body = {{"piece_id", "piece1"}, {"text", known_text()}};
  const auto r = service::handle_query(state, body.dump());
  ASSERT_EQ(r.status, 200);
  const auto direct = query_result_to_json(rank_performances(state.index, state.model, state.table, "piece1", known_text()));
  EXPECT_EQ(r.body, direct);
  EXPECT_EQ(r.body["results"].size(), 5u);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_GE(r.body["results"][i - 1]["score"], r.body["results"][i]["score"]);
}

TEST(ServiceHandlers, QueryErrors) {
  const auto& state = shared_state();
  const auto oov = service::handle_query(state, R"({"piece_id": "piece1", "text": "zzzz"})");
  EXPECT_EQ(oov.status, 400);
  EXPECT_EQ(oov.body["code"], "unencodable_query");
  EXPECT_EQ(oov.body["details"]["oov_tokens"], nlohmann::json::array({"zzzz"}));

  EXPECT_EQ(service::handle_query(state, R"({"piece_id": "nope", "text": "lexa"})").status, 404);
  EXPECT_EQ(service::handle_query(state, R"({"text": "lexa"})").status, 422);
  EXPECT_EQ(service::handle_query(state, R"({"piece_id": 3, "text": "lexa"})").status, 422);
  EXPECT_EQ(service::handle_query(state, "not json").status, 422);
  EXPECT_EQ(service::handle_query(state, "[1,2]").status, 422);
}

TEST(ServiceState, RejectsDimensionMismatch) {
  const auto world = synthetic::make_world({});
  auto model = train_projection(world.pairs, world.table, {});
  WordEmbeddingTable other(3);
  other.add("x", std::vector<double>{1, 2, 3});
  EXPECT_THROW(service::make_state(world.catalog, model, other), Error);
}

TEST(ServiceHttp, GoldenPathOverSocket) {
  const auto& state = shared_state();
  httplib::Server server;
  service::install_routes(server, state);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_EQ(nlohmann::json::parse(health->body)["model_fingerprint"], state.model.config_fingerprint);

  auto pieces = client.Get("/pieces");
  ASSERT_TRUE(pieces);
  EXPECT_EQ(nlohmann::json::parse(pieces->body)["pieces"].size(), 6u);

  auto perfs = client.Get("/pieces/piece3/performances");
  ASSERT_TRUE(perfs);
  EXPECT_EQ(nlohmann::json::parse(perfs->body)["performances"].size(), 5u);
  auto unknown = client.Get("/pieces/xyz/performances");
  ASSERT_TRUE(unknown);
  EXPECT_EQ(unknown->status, 404);

  const nlohmann::json body = {{"piece_id", "piece4"}, {"text", known_text()}};
  auto first = client.Post("/query", body.dump(), "application/json");
  auto second = client.Post("/query", body.dump(), "application/json");
  ASSERT_TRUE(first && second);
  EXPECT_EQ(first->status, 200);
  EXPECT_EQ(first->body, second->body);
  const auto direct = query_result_to_json(rank_performances(state.index, state.model, state.table, "piece4", known_text()));
  EXPECT_EQ(nlohmann::json::parse(first->body), direct);

  auto bad = client.Post("/query", R"({"piece_id": "piece1", "text": "zzzz"})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  auto malformed = client.Post("/query", R"({"text": "lexa"})", "application/json");
  ASSERT_TRUE(malformed);
  EXPECT_EQ(malformed->status, 422);

  auto preflight = client.Options("/query");
  ASSERT_TRUE(preflight);
  EXPECT_EQ(preflight->status, 204);
  EXPECT_NE(preflight->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);

  server.stop();
  thread.join();
}

TEST(ServiceHttp, ConcurrentQueriesAgree) {
  const auto& state = shared_state();
  httplib::Server server;
  service::install_routes(server, state);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const nlohmann::json body = {{"piece_id", "piece2"}, {"text", known_text()}};
  std::vector<std::string> bodies(8);
  std::vector<std::thread> clients;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    clients.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port);
      if (auto r = c.Post("/query", body.dump(), "application/json")) bodies[i] = r->body;
    });
  }
  for (auto& c : clients) c.join();
  for (const auto& b : bodies) EXPECT_EQ(b, bodies[0]);
  EXPECT_FALSE(bodies[0].empty());

  server.stop();
  thread.join();
}
