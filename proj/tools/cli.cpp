#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <httplib.h>

#include "ctxsql/corpus/corpus.hpp"
#include "ctxsql/infer_eval/inference.hpp"
#include "ctxsql/preprocess/anonymize.hpp"
#include "ctxsql/service/session_service.hpp"

namespace ctxsql::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

RunConfig default_run_config() {
  RunConfig c;
  const char* env = std::getenv(kDataDirEnv);
  c.data_dir = env && *env ? env : "data";
  return c;
}

ordered_json run_config_to_json(const RunConfig& c) {
  return {{"model", model::config_to_json(c.model)},
          {"train", training::train_config_to_json(c.train)},
          {"paths", {{"data_dir", c.data_dir}}}};
}

RunConfig run_config_from_json(const json& doc, RunConfig base) {
  if (!doc.is_object()) throw UsageError("run config must be a JSON object");
  json merged = run_config_to_json(base);
  for (const auto& [section, value] : doc.items()) {
    if (!merged.contains(section)) throw UsageError("unknown run config section '" + section + "'");
    if (!value.is_object()) throw UsageError("run config section '" + section + "' must be an object");
    for (const auto& [key, v] : value.items()) {
      if (section == "paths" && !merged[section].contains(key)) throw UsageError("unknown paths key '" + key + "'");
      merged[section][key] = v;
    }
  }
  RunConfig c;
  try {
    c.model = model::config_from_json(merged["model"]);
    c.train = training::train_config_from_json(merged["train"]);
    c.data_dir = merged["paths"]["data_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("run config: ") + e.what());
  } catch (const Error& e) {
    throw UsageError(std::string("run config: ") + e.what());
  }
  return c;
}

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string or_default(const std::string& value, const std::string& fallback) {
  return value.empty() ? fallback : value;
}

// Options shared by every subcommand that reads the run configuration.
struct ConfigFlags {
  std::string config;
  std::optional<std::string> data_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<int> h, g, word_embedding_dim, hidden_dim, position_embedding_dim, segment_age_embedding_dim,
      decoder_layers, min_input_count;
  std::optional<double> learning_rate, initial_patience, patience_multiplier, lr_decay, dropout, validation_fraction;
  std::optional<int> batch_size, max_gold_tokens, max_epochs;

  void add_data_dir(CLI::App* app) {
    app->add_option("--data-dir", data_dir, std::string("Data directory (default: $") + kDataDirEnv + " or ./data)");
  }

  void add_all(CLI::App* app) {
    app->add_option("--config", config, "Run config JSON {model, train, paths}");
    add_data_dir(app);
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--variant", variant, "seq2seq-0, seq2seq-h, s2s-anon, full-0 or full");
    app->add_option("--h", h, "History window");
    app->add_option("--g", g, "Maximum segment age");
    app->add_option("--word-embedding-dim", word_embedding_dim);
    app->add_option("--hidden-dim", hidden_dim);
    app->add_option("--position-embedding-dim", position_embedding_dim);
    app->add_option("--segment-age-embedding-dim", segment_age_embedding_dim);
    app->add_option("--decoder-layers", decoder_layers);
    app->add_option("--min-input-count", min_input_count);
    app->add_option("--learning-rate", learning_rate);
    app->add_option("--batch-size", batch_size);
    app->add_option("--initial-patience", initial_patience);
    app->add_option("--patience-multiplier", patience_multiplier);
    app->add_option("--lr-decay", lr_decay);
    app->add_option("--dropout", dropout);
    app->add_option("--max-gold-tokens", max_gold_tokens);
    app->add_option("--validation-fraction", validation_fraction);
    app->add_option("--max-epochs", max_epochs);
  }

  RunConfig resolve() const {
    RunConfig base = default_run_config();
    if (!config.empty()) {
      json doc;
      try {
        doc = read_json_file(config);
      } catch (const DataError& e) {
        throw UsageError(e.what());
      }
      base = run_config_from_json(doc, base);
    }
    json patch = {{"model", json::object()}, {"train", json::object()}, {"paths", json::object()}};
    auto set = [&](const char* section, const char* key, const auto& v) {
      if (v) patch[section][key] = *v;
    };
    set("paths", "data_dir", data_dir);
    set("train", "seed", seed);
    set("model", "variant", variant);
    set("model", "h", h);
    set("model", "g", g);
    set("model", "word_embedding_dim", word_embedding_dim);
    set("model", "hidden_dim", hidden_dim);
    set("model", "position_embedding_dim", position_embedding_dim);
    set("model", "segment_age_embedding_dim", segment_age_embedding_dim);
    set("model", "decoder_layers", decoder_layers);
    set("model", "min_input_count", min_input_count);
    set("train", "learning_rate", learning_rate);
    set("train", "batch_size", batch_size);
    set("train", "initial_patience", initial_patience);
    set("train", "patience_multiplier", patience_multiplier);
    set("train", "lr_decay", lr_decay);
    set("train", "dropout", dropout);
    set("train", "max_gold_tokens", max_gold_tokens);
    set("train", "validation_fraction", validation_fraction);
    set("train", "max_epochs", max_epochs);
    return run_config_from_json(patch, base);
  }
};

struct GenCorpusArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_interactions;
  double test_fraction = 0.2;
  std::string out;
};

int gen_corpus(const GenCorpusArgs& a, const RunConfig& rc, std::ostream& out) {
  corpus::CorpusSpec spec;
  {
    json doc = json::object();
    if (!a.config.empty()) doc = read_json_file(a.config);
    if (a.seed) doc["seed"] = *a.seed;
    if (a.n_interactions) doc["n_interactions"] = *a.n_interactions;
    try {
      spec = corpus::corpus_spec_from_json(doc);
    } catch (const Error& e) {
      throw UsageError(std::string("corpus spec: ") + e.what());
    } catch (const json::exception& e) {
      throw UsageError(std::string("corpus spec: ") + e.what());
    }
  }
  if (!(a.test_fraction >= 0.0 && a.test_fraction < 1.0)) throw UsageError("--test-fraction must be in [0, 1)");
  const std::string dir = or_default(a.out, rc.data_dir);
  fs::create_directories(dir);
  const auto generated = corpus::generate_synthetic_corpus(spec);
  corpus::save_interactions(generated.interactions, in_dir(dir, "interactions.jsonl"));
  corpus::save_database(generated.database, in_dir(dir, "database.json"));
  auto splits = corpus::split_by_scenario(generated.interactions, {1.0 - a.test_fraction, a.test_fraction}, spec.seed);
  corpus::save_interactions(splits[0], in_dir(dir, "train.jsonl"));
  corpus::save_interactions(splits[1], in_dir(dir, "test.jsonl"));
  auto stats = corpus::statistics_to_json(corpus::corpus_statistics(generated.interactions));
  write_text(in_dir(dir, "corpus_stats.json"), stats.dump(2) + "\n");
  out << "wrote " << generated.interactions.size() << " interactions (" << splits[0].size() << " train, "
      << splits[1].size() << " test) to " << dir << "\n";
  return kExitOk;
}

struct PreprocessArgs {
  std::string input, database, out;
};

int preprocess_cmd(const PreprocessArgs& a, const RunConfig& rc, std::ostream& out) {
  const std::string input = or_default(a.input, in_dir(rc.data_dir, "train.jsonl"));
  const std::string db_path = or_default(a.database, in_dir(rc.data_dir, "database.json"));
  const std::string dir = or_default(a.out, rc.data_dir);
  const auto interactions = corpus::load_interactions(input);
  const auto db = corpus::load_database(db_path);
  const auto dict = preprocess::build_entity_dictionary(db, preprocess::kDefaultTypePriority);
  std::vector<preprocess::AnonymizedInteraction> anonymized;
  for (const auto& x : interactions) anonymized.push_back(preprocess::anonymize_interaction(x, dict));
  fs::create_directories(dir);
  const std::string stem = fs::path(input).stem().string();
  const std::string anon_path = in_dir(dir, stem + ".anon.jsonl");
  preprocess::save_anonymized(anonymized, anon_path);
  preprocess::save_dictionary(dict, in_dir(dir, "dictionary.json"));
  out << "wrote " << anonymized.size() << " anonymized interactions to " << anon_path << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data, out;
};

int train_cmd(const TrainArgs& a, const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const std::string data_path = or_default(a.data, in_dir(rc.data_dir, "train.anon.jsonl"));
  const std::string ckpt = or_default(a.out, in_dir(rc.data_dir, "model.ckpt"));
  const auto data = preprocess::load_anonymized(data_path);
  if (auto parent = fs::path(ckpt).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream log(ckpt + ".log.jsonl");
  if (!log) throw DataError("cannot write training log next to '" + ckpt + "'");
  auto result = training::train(data, rc.train, rc.model, [&](const training::EpochLog& e) {
    log << training::epoch_log_to_json(e).dump() << '\n';
    log.flush();
    err << "epoch " << e.epoch << " lr " << e.lr << " train_loss " << e.train_loss << " val_token_acc "
        << e.val_token_acc << " val_string_acc " << e.val_string_acc << "\n";
  });
  ordered_json extra = {{"run_config", run_config_to_json(rc)},
                        {"training_data", data_path},
                        {"best_epoch", result.best_epoch},
                        {"n_train", result.n_train},
                        {"n_validation", result.n_validation}};
  model::save_checkpoint(*result.model, ckpt, extra);
  out << "wrote checkpoint " << ckpt << " (variant " << model::variant_name(rc.model.variant) << ", best epoch "
      << result.best_epoch << ")\n";
  return kExitOk;
}

// Model, dictionary and database for the inference subcommands.
struct Loaded {
  std::unique_ptr<model::Model> model;
  preprocess::EntityDictionary dictionary;
  corpus::Database database;

  infer_eval::InferenceContext context() { return {model.get(), &dictionary, &database}; }
};

struct InferenceArgs {
  std::string checkpoint, database, dictionary;
};

Loaded load_for_inference(const InferenceArgs& a, const RunConfig& rc, bool require_model = true) {
  Loaded l;
  const std::string ckpt = or_default(a.checkpoint, in_dir(rc.data_dir, "model.ckpt"));
  if (require_model || fs::exists(ckpt)) l.model = model::load_checkpoint(ckpt);
  l.database = corpus::load_database(or_default(a.database, in_dir(rc.data_dir, "database.json")));
  l.dictionary = a.dictionary.empty() ? preprocess::build_entity_dictionary(l.database, preprocess::kDefaultTypePriority)
                                      : preprocess::load_dictionary(a.dictionary);
  return l;
}

infer_eval::PreviousQueryMode mode_or_usage(const std::string& mode) {
  try {
    return infer_eval::parse_mode(mode);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

struct EvaluateArgs {
  InferenceArgs inference;
  std::string data, mode = "predicted", out;
  bool no_interactions = false;
};

int evaluate_cmd(const EvaluateArgs& a, const RunConfig& rc, std::ostream& out) {
  const auto mode = mode_or_usage(a.mode);
  const std::string data_path = or_default(a.data, in_dir(rc.data_dir, "test.jsonl"));
  auto l = load_for_inference(a.inference, rc);
  const auto data = corpus::load_interactions(data_path);
  const auto report = infer_eval::evaluate(l.context(), data, mode);
  if (auto bad = infer_eval::check_metric_lattice(report); !bad.empty()) throw DataError("metric lattice: " + bad);
  ordered_json doc = {{"metadata",
                       {{"checkpoint", or_default(a.inference.checkpoint, in_dir(rc.data_dir, "model.ckpt"))},
                        {"data", data_path},
                        {"variant", model::variant_name(l.model->config().variant)},
                        {"h", l.model->config().h},
                        {"g", l.model->config().g},
                        {"mode", infer_eval::mode_name(mode)}}}};
  const auto body = infer_eval::report_to_json(report, !a.no_interactions);
  for (const auto& [k, v] : body.items()) doc[k] = v;
  const std::string path = or_default(a.out, in_dir(rc.data_dir, std::string("report-") + infer_eval::mode_name(mode) + ".json"));
  write_text(path, doc.dump(2) + "\n");
  const std::string label = std::string(model::variant_name(l.model->config().variant)) +
                            (mode == infer_eval::PreviousQueryMode::Gold ? "-gold" : "");
  write_text(fs::path(path).replace_extension(".svg").string(), infer_eval::per_turn_curve_svg({{label, &report}}));
  out << label << ": query " << report.query_accuracy() << " strict " << report.strict_denotation() << " relaxed "
      << report.relaxed_denotation() << " (" << report.n_turns << " turns) -> " << path << "\n";
  return kExitOk;
}

struct PredictArgs {
  InferenceArgs inference;
  std::string input, mode = "predicted", out;
};

int predict_cmd(const PredictArgs& a, const RunConfig& rc, std::ostream& out) {
  const auto mode = mode_or_usage(a.mode);
  if (a.input.empty()) throw UsageError("predict needs --input");
  auto l = load_for_inference(a.inference, rc);
  std::string text;
  for (const auto& x : corpus::load_interactions(a.input)) {
    ordered_json turns = ordered_json::array();
    for (const auto& r : infer_eval::predict_interaction(l.context(), x, mode)) turns.push_back(infer_eval::record_to_json(r));
    text += ordered_json{{"id", x.id}, {"mode", infer_eval::mode_name(mode)}, {"turns", turns}}.dump() + "\n";
  }
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
  }
  return kExitOk;
}

struct ServeArgs {
  InferenceArgs inference;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string date = "1993-02-03";
};

int serve_cmd(const ServeArgs& a, const RunConfig& rc, std::ostream& out, std::ostream& err) {
  service::ServiceOptions options;
  try {
    options.default_date = parse_date(a.date);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  auto l = load_for_inference(a.inference, rc, false);
  if (!l.model) err << "no checkpoint found; session requests will answer 503\n";
  service::SessionService svc(l.model.get(), &l.dictionary, &l.database, options);
  httplib::Server server;
  svc.bind(server);
  out << "serving on http://" << a.host << ":" << a.port << "\n" << std::flush;
  if (!server.listen(a.host, a.port)) throw DataError("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return kExitOk;
}

struct PlotArgs {
  std::vector<std::string> reports;  // [label=]path
  std::vector<std::string> sweep;    // h=path
  std::string metric = "strict_denotation";
  std::string out;
};

infer_eval::MetricsReport report_curve(const json& doc) {
  infer_eval::MetricsReport r;
  r.mode = doc.value("mode", "");
  for (const auto& b : doc.at("per_turn_strict")) {
    infer_eval::TurnBucket t;
    t.turn_index = b.at("turn_index").get<int>();
    t.count = b.at("count").get<std::size_t>();
    t.strict = static_cast<std::size_t>(std::llround(b.at("strict_accuracy").get<double>() * static_cast<double>(t.count)));
    r.per_turn.push_back(t);
  }
  return r;
}

std::pair<std::string, std::string> split_label(const std::string& arg) {
  auto eq = arg.find('=');
  if (eq == std::string::npos) return {fs::path(arg).stem().string(), arg};
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

int plot_cmd(const PlotArgs& a, const RunConfig& rc, std::ostream& out) {
  if (a.reports.empty() && a.sweep.empty()) throw UsageError("plot needs --report or --sweep");
  const std::string dir = or_default(a.out, rc.data_dir);
  if (!a.reports.empty()) {
    std::vector<infer_eval::MetricsReport> curves;
    std::vector<std::string> labels;
    for (const auto& arg : a.reports) {
      auto [label, path] = split_label(arg);
      try {
        curves.push_back(report_curve(read_json_file(path)));
      } catch (const json::exception& e) {
        throw DataError("'" + path + "' is not a report: " + e.what());
      }
      labels.push_back(label);
    }
    std::vector<std::pair<std::string, const infer_eval::MetricsReport*>> series;
    for (std::size_t k = 0; k < curves.size(); ++k) series.emplace_back(labels[k], &curves[k]);
    write_text(in_dir(dir, "per_turn.svg"), infer_eval::per_turn_curve_svg(series));
    out << "wrote " << in_dir(dir, "per_turn.svg") << "\n";
  }
  if (!a.sweep.empty()) {
    std::vector<std::pair<int, double>> points;
    for (const auto& arg : a.sweep) {
      auto eq = arg.find('=');
      if (eq == std::string::npos) throw UsageError("--sweep expects h=report.json");
      int h = 0;
      try {
        h = std::stoi(arg.substr(0, eq));
      } catch (const std::exception&) {
        throw UsageError("--sweep expects an integer h in '" + arg + "'");
      }
      const auto doc = read_json_file(arg.substr(eq + 1));
      if (!doc.contains(a.metric) || !doc[a.metric].is_number()) throw DataError("report lacks '" + a.metric + "'");
      points.emplace_back(h, doc[a.metric].get<double>());
    }
    std::sort(points.begin(), points.end());
    write_text(in_dir(dir, "history_sweep.svg"), infer_eval::history_sweep_svg(points, a.metric));
    out << "wrote " << in_dir(dir, "history_sweep.svg") << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Context-dependent text-to-SQL toolkit", "ctxsql"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h

  ConfigFlags flags;

  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic interaction corpus and its database");
  GenCorpusArgs gen_args;
  gen->add_option("--config", gen_args.config, "Corpus spec JSON");
  gen->add_option("--seed", gen_args.seed, "Generator seed");
  gen->add_option("--n-interactions", gen_args.n_interactions, "Number of interactions");
  gen->add_option("--test-fraction", gen_args.test_fraction, "Scenario-disjoint test share")->capture_default_str();
  gen->add_option("--out", gen_args.out, "Output directory (default: data dir)");

  auto* pre = app.add_subcommand("preprocess", "Anonymize raw interactions and write the entity dictionary");
  PreprocessArgs pre_args;
  pre->add_option("--input", pre_args.input, "Raw interactions JSONL (default: <data>/train.jsonl)");
  pre->add_option("--database", pre_args.database, "Database JSON (default: <data>/database.json)");
  pre->add_option("--out", pre_args.out, "Output directory (default: data dir)");

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint plus a JSONL training log");
  TrainArgs tr_args;
  tr->set_help_flag("--help", "Print this help message and exit");
  flags.add_all(tr);
  tr->add_option("--data", tr_args.data, "Anonymized training JSONL (default: <data>/train.anon.jsonl)");
  tr->add_option("--out", tr_args.out, "Checkpoint path (default: <data>/model.ckpt)");

  auto add_inference = [](CLI::App* cmd, InferenceArgs& a) {
    cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint (default: <data>/model.ckpt)");
    cmd->add_option("--database", a.database, "Database JSON (default: <data>/database.json)");
    cmd->add_option("--dictionary", a.dictionary, "Entity dictionary JSON (default: built from the database)");
  };
  const std::vector<std::string> modes = {"predicted", "gold"};

  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint and write a report and a per-turn plot");
  EvaluateArgs ev_args;
  flags.add_data_dir(ev);
  add_inference(ev, ev_args.inference);
  ev->add_option("--data", ev_args.data, "Raw interactions JSONL (default: <data>/test.jsonl)");
  ev->add_option("--mode", ev_args.mode, "Previous-query mode")->check(CLI::IsMember(modes));
  ev->add_option("--out", ev_args.out, "Report path (default: <data>/report-<mode>.json)");
  ev->add_flag("--no-interactions", ev_args.no_interactions, "Omit per-interaction records");

  auto* pr = app.add_subcommand("predict", "Predict every turn of the interactions in one file");
  PredictArgs pr_args;
  flags.add_data_dir(pr);
  add_inference(pr, pr_args.inference);
  pr->add_option("--input", pr_args.input, "Raw interactions JSONL")->required();
  pr->add_option("--mode", pr_args.mode, "Previous-query mode")->check(CLI::IsMember(modes));
  pr->add_option("--out", pr_args.out, "Predictions JSONL (default: stdout)");

  auto* sv = app.add_subcommand("serve", "Start the HTTP session service");
  ServeArgs sv_args;
  flags.add_data_dir(sv);
  add_inference(sv, sv_args.inference);
  sv->add_option("--host", sv_args.host, "Bind address")->capture_default_str();
  sv->add_option("--port", sv_args.port, "Port")->capture_default_str();
  sv->add_option("--date", sv_args.date, "Default document date for new sessions")->capture_default_str();

  auto* pl = app.add_subcommand("plot", "Render per-turn curves and the history-window sweep");
  PlotArgs pl_args;
  flags.add_data_dir(pl);
  pl->add_option("--report", pl_args.reports, "[label=]report.json, repeatable");
  pl->add_option("--sweep", pl_args.sweep, "h=report.json, repeatable");
  pl->add_option("--metric", pl_args.metric, "Report field for the sweep")->capture_default_str()
      ->check(CLI::IsMember({"query_accuracy", "strict_denotation", "relaxed_denotation"}));
  pl->add_option("--out", pl_args.out, "Output directory (default: data dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kExitOk;
    }
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    const RunConfig rc = flags.resolve();
    if (gen->parsed()) return gen_corpus(gen_args, rc, out);
    if (pre->parsed()) return preprocess_cmd(pre_args, rc, out);
    if (tr->parsed()) return train_cmd(tr_args, rc, out, err);
    if (ev->parsed()) return evaluate_cmd(ev_args, rc, out);
    if (pr->parsed()) return predict_cmd(pr_args, rc, out);
    if (sv->parsed()) return serve_cmd(sv_args, rc, out, err);
    if (pl->parsed()) return plot_cmd(pl_args, rc, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace ctxsql::cli
