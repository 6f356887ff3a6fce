#pragma once

#include <chrono>
#include <ctime>
#include <string>
#include <utility>

#include <json.hpp>

// Eigen must be seen before httplib: <resolv.h> defines a `_res` macro that
// clashes with Eigen parameter names.
#include "espresso/corpus.hpp"
#include "espresso/error.hpp"
#include "espresso/numerics.hpp"
#include "espresso/retrieval.hpp"
#include "espresso/text_encoder.hpp"
#include "espresso/version.hpp"

#include <httplib.h>

namespace espresso::service {

// Everything a request can see. Built once before the server starts
// listening and never mutated afterwards.
struct ServiceState {
  Catalog catalog;
  ProjectionModel model;
  WordEmbeddingTable table;
  RetrievalIndex index;
  std::string version = kVersion;
  std::chrono::system_clock::time_point started_at = std::chrono::system_clock::now();
};

inline ServiceState make_state(Catalog catalog, ProjectionModel model, WordEmbeddingTable table) {
  if (table.dimension() != model.input_dimension) {
    throw Error(ErrorCode::dimension, "embedding dimension " + std::to_string(table.dimension()) +
                                          " does not match the model's " +
                                          std::to_string(model.input_dimension));
  }
  ServiceState state{std::move(catalog), std::move(model), std::move(table), {}};
  state.index = build_index(state.catalog, state.model);
  return state;
}

struct Response {
  int status = 200;
  nlohmann::json body;
};

inline Response error_response(int status, std::string_view code, const std::string& message,
                               nlohmann::json details = nlohmann::json::object()) {
  return {status, {{"code", code}, {"message", message}, {"details", std::move(details)}}};
}

inline Response handle_health(const ServiceState& state) {
  const auto uptime = std::chrono::duration_cast<std::chrono::seconds>(
      std::chrono::system_clock::now() - state.started_at);
  return {200,
          {{"status", "ok"},
           {"version", state.version},
           {"model_fingerprint", state.model.config_fingerprint},
           {"uptime_seconds", uptime.count()}}};
}

inline Response handle_pieces(const ServiceState& state) {
  nlohmann::json pieces = nlohmann::json::array();
  for (const auto& p : state.catalog.pieces()) {
    pieces.push_back({{"piece_id", p.piece_id},
                      {"title", p.title},
                      {"performance_count", p.performance_ids.size()},
                      {"performance_ids", p.performance_ids}});
  }
  return {200, {{"pieces", pieces}}};
}

inline Response handle_performances(const ServiceState& state, const std::string& piece_id) {
  const auto* piece = state.catalog.find_piece(piece_id);
  if (piece == nullptr) {
    return error_response(404, "unknown_piece", "unknown piece '" + piece_id + "'", {{"piece_id", piece_id}});
  }
  nlohmann::json perfs = nlohmann::json::array();
  for (const auto& id : piece->performance_ids) {
    const auto* perf = state.catalog.find_performance(id);
    perfs.push_back({{"performance_id", perf->performance_id},
                     {"artist_label", perf->artist_label},
                     {"features", perf->features.values}});
  }
  return {200,
          {{"piece_id", piece->piece_id},
           {"title", piece->title},
           {"dimensions", kMidLevelNames},
           {"performances", perfs}}};
}

inline Response handle_query(const ServiceState& state, const std::string& body) {
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_response(422, "malformed_body", std::string("request body is not valid JSON: ") + e.what());
  }
  if (!request.is_object()) return error_response(422, "malformed_body", "request body must be an object");
  for (const char* field : {"piece_id", "text"}) {
    auto it = request.find(field);
    if (it == request.end() || !it->is_string()) {
      return error_response(422, "malformed_body", std::string("field '") + field + "' must be a string",
                            {{"field", field}});
    }
  }
  const auto piece_id = request["piece_id"].get<std::string>();
  const auto text = request["text"].get<std::string>();

  try {
    return {200, query_result_to_json(rank_performances(state.index, state.model, state.table, piece_id, text))};
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::unknown_piece:
        return error_response(404, "unknown_piece", e.what(), {{"piece_id", piece_id}});
      case ErrorCode::unencodable_query:
        return error_response(400, "unencodable_query", e.what(), {{"oov_tokens", e.details()}});
      default:
        return error_response(500, to_string(e.code()), e.what());
    }
  }
}

// Registers every endpoint on `server`. `state` must outlive the server.
inline void install_routes(httplib::Server& server, const ServiceState& state) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});

  const auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json; charset=utf-8");
  };

  server.Get("/health", [&state, send](const httplib::Request&, httplib::Response& res) {
    send(res, handle_health(state));
  });
  server.Get("/pieces", [&state, send](const httplib::Request&, httplib::Response& res) {
    send(res, handle_pieces(state));
  });
  server.Get(R"(/pieces/([^/]+)/performances)", [&state, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_performances(state, req.matches[1]));
  });
  server.Post("/query", [&state, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_query(state, req.body));
  });
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

}  // namespace espresso::service
