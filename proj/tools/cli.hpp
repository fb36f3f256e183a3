#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "ctxsql/common.hpp"
#include "ctxsql/model/model.hpp"
#include "ctxsql/training/training.hpp"

namespace ctxsql::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

inline constexpr const char* kDataDirEnv = "CTXSQL_DATA_DIR";

class UsageError : public Error {
 public:
  using Error::Error;
};

// Everything a training run needs, serialized as one document:
// {"model": {...}, "train": {...}, "paths": {"data_dir": ...}}.
struct RunConfig {
  model::ModelConfig model;
  training::TrainConfig train;
  std::string data_dir;
};

// Defaults come from the library configs; data_dir from the environment
// variable, else "data".
RunConfig default_run_config();
nlohmann::ordered_json run_config_to_json(const RunConfig& c);
// Starts from `base` and applies the keys present; unknown keys throw UsageError.
RunConfig run_config_from_json(const nlohmann::json& doc, RunConfig base = default_run_config());

// Runs one subcommand. Exit codes: 0 success, 1 usage error, 2 data error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctxsql::cli
