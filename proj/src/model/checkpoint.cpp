#include <fstream>

#include "ctxsql/common.hpp"
#include "ctxsql/model/model.hpp"

namespace ctxsql::model {

namespace {
constexpr const char* kFormat = "ctxsql-checkpoint";
}

// Layout: one JSON header line, then every parameter as raw little-endian
// doubles in column-major order, in header order.
void save_checkpoint(const Model& m, const std::string& path, const nlohmann::json& extra) {
  nlohmann::ordered_json header;
  header["format"] = kFormat;
  header["version"] = kCheckpointVersion;
  header["config"] = config_to_json(m.config());
  header["vocabs"] = {{"input", m.vocabs().input.tokens()},
                      {"output", m.vocabs().output.tokens()},
                      {"anon_types", m.vocabs().anon_types}};
  auto shapes = nlohmann::ordered_json::array();
  for (const auto& p : m.params().params()) {
    shapes.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  header["params"] = shapes;
  header["extra"] = extra;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out << header.dump() << '\n';
  for (const auto& p : m.params().params()) {
    out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

std::unique_ptr<Model> load_checkpoint(const std::string& path, nlohmann::json* extra) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint '" + path + "' is empty");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "' has a malformed header: " + e.what());
  }
  if (header.value("format", "") != kFormat) throw DataError("'" + path + "' is not a checkpoint");
  if (header.value("version", -1) != kCheckpointVersion) {
    throw DataError("checkpoint '" + path + "' has unsupported version " + header["version"].dump());
  }
  try {
    Vocabs vocabs;
    vocabs.input = Vocabulary(header["vocabs"]["input"].get<std::vector<std::string>>());
    vocabs.output = Vocabulary(header["vocabs"]["output"].get<std::vector<std::string>>());
    vocabs.anon_types = header["vocabs"]["anon_types"].get<std::vector<std::string>>();
    auto model = std::make_unique<Model>(config_from_json(header["config"]), std::move(vocabs));
    const auto& shapes = header["params"];
    auto& params = model->params().params();
    if (shapes.size() != params.size()) throw DataError("checkpoint parameter count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      if (shapes[k]["name"] != p.name || shapes[k]["rows"] != p.value.rows() || shapes[k]["cols"] != p.value.cols()) {
        throw DataError("checkpoint parameter '" + shapes[k]["name"].get<std::string>() + "' does not match the model");
      }
      in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
      if (!in) throw DataError("checkpoint '" + path + "' is truncated");
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint '" + path + "' has trailing bytes");
    if (extra) *extra = header.value("extra", nlohmann::json::object());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "' has an invalid header: " + e.what());
  }
}

}  // namespace ctxsql::model
