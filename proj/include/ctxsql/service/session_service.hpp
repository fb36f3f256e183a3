#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include <json.hpp>

#include "ctxsql/corpus/database.hpp"
#include "ctxsql/infer_eval/inference.hpp"
#include "ctxsql/model/model.hpp"
#include "ctxsql/preprocess/anonymize.hpp"

namespace httplib {
class Server;
}

namespace ctxsql::service {

inline constexpr int kApiVersion = 1;

struct ServiceOptions {
  std::size_t max_rows = 200;
  Date default_date = parse_date("1993-02-03");
  int max_tokens = infer_eval::kMaxDecodeTokens;
};

struct Response {
  int status = 200;
  nlohmann::ordered_json body;
};

// Live multi-turn sessions over a shared read-only model. Sessions are
// independent; posts to one session are serialized by its own mutex.
class SessionService {
 public:
  // A null model makes every session request answer 503.
  SessionService(model::Model* model, const preprocess::EntityDictionary* dictionary, const corpus::Database* database,
                 ServiceOptions options = {});

  Response create_session(const nlohmann::json& request);  // optional {"date": "YYYY-MM-DD"}
  Response post_utterance(const std::string& id, const nlohmann::json& request);
  Response get_session(const std::string& id);
  Response delete_session(const std::string& id);

  // Routes a request the way the HTTP server does (used by tests).
  Response handle(const std::string& method, const std::string& path, const std::string& body);

  void bind(httplib::Server& server);
  std::size_t session_count() const;

 private:
  struct Session {
    std::mutex mutex;
    std::string id;
    std::string created;
    infer_eval::SessionState state;
    nlohmann::ordered_json transcript = nlohmann::ordered_json::array();
  };

  model::Model* model_;
  const preprocess::EntityDictionary* dictionary_;
  const corpus::Database* database_;
  ServiceOptions options_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mt19937_64 id_rng_;

  std::shared_ptr<Session> find(const std::string& id) const;
  std::string new_id();
  Response error(int status, const std::string& message) const;
};

}  // namespace ctxsql::service
