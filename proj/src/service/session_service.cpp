#include "ctxsql/service/session_service.hpp"

#include <cstdio>
#include <ctime>

#include <httplib.h>

#include "ctxsql/common.hpp"
#include "ctxsql/corpus/corpus.hpp"
#include "ctxsql/sqlkit/executor.hpp"
#include "ctxsql/sqlkit/sql.hpp"

namespace ctxsql::service {

namespace {

nlohmann::ordered_json value_json(const corpus::Value& v) {
  if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
  if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
  return nullptr;
}

std::string now_utc() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<Date> optional_date(const nlohmann::json& request) {
  if (!request.is_object() || !request.contains("date") || request["date"].is_null()) return std::nullopt;
  if (!request["date"].is_string()) throw DataError("date must be a string");
  return parse_date(request["date"].get<std::string>());
}

}  // namespace

SessionService::SessionService(model::Model* model, const preprocess::EntityDictionary* dictionary,
                               const corpus::Database* database, ServiceOptions options)
    : model_(model), dictionary_(dictionary), database_(database), options_(options), id_rng_(std::random_device{}()) {}

Response SessionService::error(int status, const std::string& message) const {
  return {status, {{"api_version", kApiVersion}, {"error", message}}};
}

std::string SessionService::new_id() {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(id_rng_()),
                static_cast<unsigned long long>(id_rng_()));
  return buf;
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::size_t SessionService::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

Response SessionService::create_session(const nlohmann::json& request) {
  if (!model_ || !dictionary_ || !database_) return error(503, "service has no model loaded");
  std::optional<Date> date;
  try {
    date = optional_date(request);
  } catch (const Error& e) {
    return error(400, e.what());
  }
  auto s = std::make_shared<Session>();
  s->created = now_utc();
  s->state = infer_eval::new_session(date.value_or(options_.default_date));
  {
    std::lock_guard lock(sessions_mutex_);
    do {
      s->id = new_id();
    } while (sessions_.count(s->id));
    sessions_[s->id] = s;
  }
  return {201,
          {{"api_version", kApiVersion},
           {"session_id", s->id},
           {"created", s->created},
           {"document_date", format_date(s->state.document_date)}}};
}

Response SessionService::post_utterance(const std::string& id, const nlohmann::json& request) {
  if (!model_) return error(503, "service has no model loaded");
  auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  if (!request.is_object() || !request.contains("text") || !request["text"].is_string()) {
    return error(400, "request needs a string field 'text'");
  }
  const auto tokens = corpus::tokenize_utterance(request["text"].get<std::string>());
  if (tokens.empty()) return error(400, "empty utterance");
  std::optional<Date> date;
  try {
    date = optional_date(request);
  } catch (const Error& e) {
    return error(400, e.what());
  }

  std::lock_guard lock(s->mutex);
  if (date) s->state.document_date = *date;
  infer_eval::InferenceContext ctx{model_, dictionary_, database_, options_.max_tokens};
  auto record = infer_eval::predict_turn(ctx, s->state, tokens, infer_eval::PreviousQueryMode::Predicted);
  auto table = sqlkit::execute(record.query, *database_);

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < table.rows.size() && r < options_.max_rows; ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (const auto& v : table.rows[r]) row.push_back(value_json(v));
    rows.push_back(row);
  }
  nlohmann::ordered_json result = {{"execution_failed", table.execution_failed},
                                   {"error", table.error},
                                   {"columns", table.columns},
                                   {"rows", rows},
                                   {"total_rows", table.rows.size()},
                                   {"truncated", table.rows.size() > options_.max_rows}};
  auto rec = infer_eval::record_to_json(record);
  nlohmann::ordered_json turn = {{"turn", record.turn},
                                 {"text", request["text"]},
                                 {"document_date", format_date(s->state.document_date)},
                                 {"utterance", rec["utterance"]},
                                 {"sql", rec["sql"]},
                                 {"anonymized_sql", rec["anonymized_sql"]},
                                 {"decisions", rec["decisions"]},
                                 {"result", result},
                                 {"segments_used", rec["segments_used"]},
                                 {"attention", rec["attention"]},
                                 {"anonymization_added", rec["anonymization_added"]},
                                 {"hit_cap", rec["hit_cap"]}};
  s->transcript.push_back(turn);
  nlohmann::ordered_json body = {{"api_version", kApiVersion}, {"session_id", id}};
  for (auto& [k, v] : turn.items()) body[k] = v;
  return {200, body};
}

Response SessionService::get_session(const std::string& id) {
  auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  std::lock_guard lock(s->mutex);
  return {200,
          {{"api_version", kApiVersion},
           {"session_id", id},
           {"created", s->created},
           {"document_date", format_date(s->state.document_date)},
           {"turns", s->transcript}}};
}

Response SessionService::delete_session(const std::string& id) {
  std::shared_ptr<Session> removed;
  {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it != sessions_.end()) {
      removed = it->second;
      sessions_.erase(it);
    }
  }
  return {200, {{"api_version", kApiVersion}, {"session_id", id}, {"deleted", removed != nullptr}}};
}

Response SessionService::handle(const std::string& method, const std::string& path, const std::string& body) {
  nlohmann::json request = nlohmann::json::object();
  if (!body.empty()) {
    try {
      request = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return error(400, "request body is not valid JSON");
    }
  }
  const std::string prefix = "/sessions";
  if (path == prefix) {
    if (method == "POST") return create_session(request);
    return error(405, "method not allowed");
  }
  if (path.rfind(prefix + "/", 0) != 0) return error(404, "no such endpoint");
  std::string rest = path.substr(prefix.size() + 1);
  const std::string suffix = "/utterances";
  if (rest.size() > suffix.size() && rest.compare(rest.size() - suffix.size(), suffix.size(), suffix) == 0) {
    if (method != "POST") return error(405, "method not allowed");
    return post_utterance(rest.substr(0, rest.size() - suffix.size()), request);
  }
  if (rest.find('/') != std::string::npos || rest.empty()) return error(404, "no such endpoint");
  if (method == "GET") return get_session(rest);
  if (method == "DELETE") return delete_session(rest);
  return error(405, "method not allowed");
}

void SessionService::bind(httplib::Server& server) {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    Response r;
    try {
      r = handle(req.method, req.path, req.body);
    } catch (const std::exception& e) {
      r = error(500, e.what());
    }
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Post("/sessions", route);
  server.Post(R"(/sessions/[^/]+/utterances)", route);
  server.Get(R"(/sessions/[^/]+)", route);
  server.Delete(R"(/sessions/[^/]+)", route);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

}  // namespace ctxsql::service
