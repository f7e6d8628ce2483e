#pragma once

// Batch commands behind the `enspost` binary: config resolution and schema
// validation, the four subcommands, and the run manifest.

#include "enspost/importance.hpp"
#include "enspost/train.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace enspost::cli {

namespace fs = std::filesystem;

inline constexpr std::string_view kRunConfigSchemaText =
#include "enspost/run_config.schema.inc"
    ;
inline constexpr std::string_view kImportanceReportSchemaText =
#include "enspost/importance_report.schema.inc"
    ;

inline const Json& run_config_schema() {
  static const Json s = Json::parse(kRunConfigSchemaText);
  return s;
}

inline const Json& importance_report_schema() {
  static const Json s = Json::parse(kImportanceReportSchemaText);
  return s;
}

// ---------------------------------------------------------------------------
// Schema validation (type, enum, properties, required, additionalProperties,
// items, minItems/maxItems, minimum/maximum/exclusiveMinimum, local $ref).

class SchemaValidator {
 public:
  explicit SchemaValidator(const Json& root) : root_(root) {}

  void validate(const Json& doc, const std::string& name) const { check(root_, doc, name); }

 private:
  const Json& root_;

  const Json& resolve(const Json& s) const {
    if (!s.contains("$ref")) return s;
    const std::string ref = s["$ref"].get<std::string>();
    if (ref.rfind("#/", 0) != 0) throw ConfigError("schema: unsupported $ref '" + ref + "'");
    return root_.at(Json::json_pointer(ref.substr(1)));
  }

  static bool has_type(const Json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    throw ConfigError("schema: unknown type '" + t + "'");
  }

  static std::string describe(const Json& s) {
    return s.is_string() ? s.get<std::string>() : s.dump();
  }

  void check(const Json& schema_in, const Json& v, const std::string& path) const {
    const Json& s = resolve(schema_in);
    auto fail = [&](const std::string& msg) { throw ConfigError(path + ": " + msg); };
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || has_type(v, t.get<std::string>());
      } else {
        ok = has_type(v, s["type"].get<std::string>());
      }
      if (!ok) fail("expected " + describe(s["type"]) + ", got " + v.dump());
    }
    if (s.contains("enum")) {
      bool ok = false;
      for (const auto& e : s["enum"]) ok = ok || e == v;
      if (!ok) fail("must be one of " + s["enum"].dump() + ", got " + v.dump());
    }
    if (v.is_number()) {
      const double x = v.get<double>();
      if (s.contains("minimum") && x < s["minimum"].get<double>()) fail("must be >= " + s["minimum"].dump());
      if (s.contains("maximum") && x > s["maximum"].get<double>()) fail("must be <= " + s["maximum"].dump());
      if (s.contains("exclusiveMinimum") && !(x > s["exclusiveMinimum"].get<double>())) {
        fail("must be > " + s["exclusiveMinimum"].dump());
      }
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) {
        fail("needs at least " + s["minItems"].dump() + " items");
      }
      if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) {
        fail("allows at most " + s["maxItems"].dump() + " items");
      }
      if (s.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) check(s["items"], v[i], path + "[" + std::to_string(i) + "]");
      }
    }
    if (v.is_object()) {
      const auto sub = [&](const std::string& key) { return path.empty() ? key : path + "." + key; };
      if (s.contains("required")) {
        for (const auto& r : s["required"]) {
          if (!v.contains(r.get<std::string>())) throw ConfigError(sub(r.get<std::string>()) + ": required field missing");
        }
      }
      const Json empty = Json::object();
      const Json& props = s.contains("properties") ? s["properties"] : empty;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (props.contains(it.key())) {
          check(props[it.key()], it.value(), sub(it.key()));
        } else if (s.contains("additionalProperties")) {
          const Json& ap = s["additionalProperties"];
          if (ap.is_boolean()) {
            if (!ap.get<bool>()) throw ConfigError(sub(it.key()) + ": unknown field");
          } else {
            check(ap, it.value(), sub(it.key()));
          }
        }
      }
    }
  }
};

inline void validate_run_config(const Json& cfg) { SchemaValidator(run_config_schema()).validate(cfg, ""); }

inline void validate_importance_report(const Json& report) {
  SchemaValidator(importance_report_schema()).validate(report, "report");
}

// ---------------------------------------------------------------------------
// Hashing and file helpers

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256: digest failed");
  }
  std::ostringstream s;
  for (unsigned int i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return s.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::string sha256_file(const fs::path& p) { return sha256_hex(read_file(p)); }

inline void write_file(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + p.string() + "'");
}

/// Tracks files written below the output directory for the manifest.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_)) throw IoError("cannot create output directory '" + root_.string() + "'");
  }

  const fs::path& root() const { return root_; }

  fs::path add(const std::string& rel) {
    const fs::path p = root_ / rel;
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create '" + p.parent_path().string() + "'");
    files_.push_back(rel);
    return p;
  }

  void write(const std::string& rel, std::string_view bytes) { write_file(add(rel), bytes); }

  Json hashes() const {
    Json h = Json::object();
    std::vector<std::string> sorted = files_;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& f : sorted) h[f] = sha256_file(root_ / f);
    return h;
  }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

// ---------------------------------------------------------------------------
// Config resolution

inline Json parse_override_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error&) {
    return Json(text);
  }
}

/// `a.b.c=value`; value is parsed as JSON when possible, else taken as a string.
inline void apply_override(Json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set '" + kv + "': expected key=value");
  const std::string key = kv.substr(0, eq);
  Json* node = &cfg;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set '" + kv + "': empty key component");
    if (!node->is_object()) throw ConfigError("--set '" + kv + "': '" + key.substr(0, start ? start - 1 : 0) + "' is not an object");
    if (dot == std::string::npos) {
      (*node)[part] = parse_override_value(kv.substr(eq + 1));
      return;
    }
    if (!node->contains(part)) (*node)[part] = Json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

inline Json load_config_file(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

struct RunContext {
  Json config;  // validated, overrides applied
  fs::path out;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct CommandLine {
  std::optional<std::string> config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int workers = 0;  // 0: ENSPOST_WORKERS or 1
};

inline RunContext resolve(const CommandLine& cl) {
  Json cfg = cl.config_path ? load_config_file(*cl.config_path) : Json::object();
  if (!cfg.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& kv : cl.sets) apply_override(cfg, kv);
  if (cl.seed) cfg["seed"] = *cl.seed;
  if (cl.out) cfg["out"] = *cl.out;
  validate_run_config(cfg);
  if (cfg.contains("data") && cfg.contains("synth")) throw ConfigError("data: cannot be combined with synth");
  if (!cfg.contains("out")) throw ConfigError("out: required field missing (use --out)");
  RunContext ctx;
  ctx.out = cfg["out"].get<std::string>();
  ctx.seed = cfg.value("seed", std::uint64_t{1});
  ctx.workers = resolve_workers(cl.workers);
  cfg.erase("out");
  ctx.config = std::move(cfg);
  return ctx;
}

inline const Json& section(const Json& cfg, const char* name) {
  static const Json empty = Json::object();
  return cfg.contains(name) ? cfg[name] : empty;
}

inline SynthConfig synth_config(const Json& cfg, std::uint64_t seed) {
  SynthConfig c = section(cfg, "synth").get<SynthConfig>();
  if (!section(cfg, "synth").contains("seed")) c.seed = seed;
  return c;
}

inline ModelConfig model_config(const Json& cfg, std::uint64_t seed) {
  ModelConfig c = section(cfg, "model").get<ModelConfig>();
  if (!section(cfg, "model").contains("seed")) c.seed = seed;
  c.validate();
  return c;
}

inline std::array<double, 3> split_fractions(const Json& cfg) {
  if (!cfg.contains("split")) return {0.7, 0.15, 0.15};
  const auto v = cfg["split"].get<std::vector<double>>();
  return {v[0], v[1], v[2]};
}

/// Data section as resolved for the manifest: either `data` or a full `synth`.
inline Json data_source(const Json& cfg, std::uint64_t seed) {
  if (cfg.contains("data")) return Json{{"data", cfg["data"]}};
  return Json{{"synth", synth_config(cfg, seed)}};
}

inline Dataset load_data(const Json& source) {
  if (source.contains("data")) {
    const Json& d = source["data"];
    return load_ndjson(d["path"].get<std::string>(), d.value("primary", std::string()));
  }
  return generate_synthetic(source["synth"].get<SynthConfig>());
}

// ---------------------------------------------------------------------------
// Manifest

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

/// manifest.json holds everything that determines the outputs plus their
/// hashes; wall time and worker count go to timing.json.
inline void write_manifest(OutputDir& out, const std::string& command, const RunContext& ctx, const Json& resolved,
                           const Json& inputs, Json timing) {
  const Json manifest{{"tool", "enspost"},
                      {"format", 1},
                      {"command", command},
                      {"seed", ctx.seed},
                      {"config", ctx.config},
                      {"resolved", resolved},
                      {"inputs", inputs},
                      {"outputs", out.hashes()}};
  write_file(out.root() / "manifest.json", manifest.dump(2) + "\n");
  timing["command"] = command;
  timing["workers"] = ctx.workers;
  write_file(out.root() / "timing.json", timing.dump(2) + "\n");
}

inline Json input_hashes(const Json& source) {
  Json h = Json::object();
  if (source.contains("data")) {
    const std::string p = source["data"]["path"].get<std::string>();
    h[p] = sha256_file(p);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Pools on disk

struct LoadedPool {
  std::string path;
  ModelPool pool;
  Json manifest;  // the training run's manifest, if present
  std::vector<std::string> files;
};

inline LoadedPool load_pool(const std::string& dir) {
  LoadedPool lp;
  lp.path = dir;
  const fs::path ck = fs::path(dir) / "checkpoints";
  std::error_code ec;
  if (!fs::is_directory(ck, ec)) throw IoError("pool '" + dir + "': no checkpoints directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(ck)) {
    if (e.path().extension() == ".ckpt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("pool '" + dir + "': no checkpoints");
  for (const auto& f : files) {
    lp.pool.models.push_back(load_checkpoint(f.string()));
    lp.files.push_back(f.string());
  }
  const fs::path man = fs::path(dir) / "manifest.json";
  if (fs::exists(man)) {
    try {
      lp.manifest = Json::parse(read_file(man));
    } catch (const Json::parse_error& e) {
      throw ConfigError("pool '" + dir + "': bad manifest: " + e.what());
    }
  }
  const Family fam = lp.pool.models.front().family();
  for (std::size_t i = 0; i < lp.pool.models.size(); ++i) {
    if (lp.pool.models[i].family() != fam) {
      throw ContractError("pool '" + dir + "': checkpoints mix distribution families");
    }
  }
  return lp;
}

/// Data source for commands that consume a trained pool: the command's own
/// data/synth section if given, otherwise the one the pool was trained on.
inline Json consumer_source(const RunContext& ctx, const LoadedPool* pool, std::array<double, 3>& split) {
  const Json& cfg = ctx.config;
  if (cfg.contains("data") || cfg.contains("synth") || !pool || !pool->manifest.contains("resolved")) {
    split = split_fractions(cfg);
    return data_source(cfg, ctx.seed);
  }
  const Json& r = pool->manifest["resolved"];
  split = r.at("split").get<std::array<double, 3>>();
  return r.at("source");
}

inline std::string method_label(const Model& m) {
  std::string s = to_string(m.config.architecture);
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_synth(const RunContext& ctx, std::ostream& log = std::cout) {
  Timer timer;
  if (ctx.config.contains("data")) throw ConfigError("data: synth generates its own data; remove this section");
  const SynthConfig sc = synth_config(ctx.config, ctx.seed);
  const auto split = split_fractions(ctx.config);
  const Dataset d = generate_synthetic(sc);
  OutputDir out(ctx.out);
  std::ostringstream nd;
  save_ndjson(d, nd);
  out.write("data.ndjson", nd.str());
  const Splits sp = split_temporal(d, split);
  const Json sidecar{{"fitted_on", "train"},
                     {"split", split},
                     {"predictors", d.predictor_names},
                     {"scalars", d.scalar_names},
                     {"primary", d.predictor_names[d.primary]},
                     {"normalization", fit_normalization(sp.train)}};
  out.write("data.stats.json", sidecar.dump(2) + "\n");
  log << "T=" << d.size() << " M=" << d.members() << " p=" << d.predictors() << " q=" << d.scalars() << '\n';
  write_manifest(out, "synth", ctx, Json{{"source", Json{{"synth", sc}}}, {"split", split}}, Json::object(),
                 Json{{"wall_seconds", timer.seconds()}});
}

inline void cmd_train(const RunContext& ctx, std::ostream& log = std::cout) {
  Timer timer;
  const Json source = data_source(ctx.config, ctx.seed);
  const auto split = split_fractions(ctx.config);
  const ModelConfig mc = model_config(ctx.config, ctx.seed);
  const int n = section(ctx.config, "train").value("pool_size", 20);
  const Dataset d = load_data(source);
  const Splits sp = split_temporal(d, split);
  const ModelPool pool = train_pool(mc, sp.train, sp.val, n, ctx.workers);
  OutputDir out(ctx.out);
  std::vector<double> walls;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    std::ostringstream name;
    name << "checkpoints/model_" << std::setw(3) << std::setfill('0') << i << ".ckpt";
    std::ostringstream bytes;
    save_checkpoint(pool.models[i], bytes);
    out.write(name.str(), bytes.str());
    walls.push_back(pool.reports[i].wall_seconds);
    log << name.str() << ": seed " << pool.reports[i].seed << ", epoch " << pool.reports[i].selected_epoch
        << ", validation CRPS " << pool.reports[i].best_val_crps() << '\n';
  }
  const PoolSpread spread = validation_spread(pool);
  const Json reports{{"architecture", to_string(mc.architecture)},
                     {"pool_size", pool.size()},
                     {"validation_crps", Json{{"min", spread.min}, {"median", spread.median}, {"max", spread.max}}},
                     {"runs", pool.reports}};
  out.write("train_reports.json", reports.dump(2) + "\n");
  const Json resolved{{"source", source}, {"split", split}, {"model", mc}, {"pool_size", n}};
  write_manifest(out, "train", ctx, resolved, input_hashes(source),
                 Json{{"wall_seconds", timer.seconds()}, {"model_wall_seconds", walls}});
}

inline void cmd_evaluate(const RunContext& ctx, std::ostream& log = std::cout) {
  Timer timer;
  const Json& ev = section(ctx.config, "eval");
  const auto pool_dirs = ev.value("pools", std::vector<std::string>{});
  const bool eps = ev.value("eps", true);
  const auto k_req = ev.value("k", 10);
  const auto reps = ev.value("reps", 50);
  const int pit_bins = ev.value("pit_bins", kDefaultPitBins);
  const auto nq = ev.value("quantile_levels", static_cast<int>(kDefaultQuantileCount));
  if (pool_dirs.empty() && !eps) throw ConfigError("eval: nothing to evaluate (no pools and eps disabled)");

  std::vector<LoadedPool> pools;
  for (const auto& p : pool_dirs) pools.push_back(load_pool(p));
  std::array<double, 3> split{};
  const Json source = consumer_source(ctx, pools.empty() ? nullptr : &pools.front(), split);
  const Dataset d = load_data(source);
  const Splits sp = split_temporal(d, split);
  const Dataset& test = sp.test;
  if (test.empty()) throw DomainError("evaluate: empty test split");
  for (const auto& lp : pools) {
    for (const auto& m : lp.pool.models) m.check_dataset(test);
  }
  const double level = nominal_pi_level(test.members());

  Json methods = Json::array();
  std::vector<ReportRow> rows;
  std::map<std::string, int> seen;
  if (eps) {
    const EvaluationReport r = raw_eps_report(test, test.primary, level, pit_bins, derive_seed(ctx.seed, "evaluate.eps"));
    rows.push_back({"EPS", r});
    methods.push_back(Json{{"method", "EPS"}, {"report", r}});
  }
  for (std::size_t i = 0; i < pools.size(); ++i) {
    const ModelPool& pool = pools[i].pool;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_req), pool.size());
    const ResampleResult rr = resample_and_score(pool, k, static_cast<std::size_t>(reps), test,
                                                 derive_seed(ctx.seed, "evaluate.resample", i), level, pit_bins,
                                                 static_cast<std::size_t>(nq), ctx.workers);
    std::string label = method_label(pool.models.front());
    if (++seen[label] > 1) label += " (" + std::to_string(seen[label]) + ")";
    EvaluationReport summary = rr.reports.front();
    summary.mean_crps = rr.mean_crps;
    summary.mean_pi_length = rr.mean_pi_length;
    summary.pi_coverage = rr.mean_pi_coverage;
    rows.push_back({label, summary, rr.min_crps, rr.max_crps});
    methods.push_back(Json{{"method", label},
                           {"pool", pools[i].path},
                           {"architecture", to_string(pool.models.front().config.architecture)},
                           {"pool_size", pool.size()},
                           {"k", k},
                           {"reps", reps},
                           {"report", summary},
                           {"resample", rr}});
  }

  OutputDir out(ctx.out);
  const Json result{{"pi_level", level}, {"n_test", test.size()}, {"methods", methods}};
  out.write("evaluation.json", result.dump(2) + "\n");
  std::ostringstream table, csv;
  write_table(table, rows);
  write_pit_csv(csv, rows);
  out.write("evaluation.txt", table.str());
  out.write("pit.csv", csv.str());
  log << table.str();

  Json inputs = input_hashes(source);
  for (const auto& lp : pools) {
    for (const auto& f : lp.files) inputs[f] = sha256_file(f);
  }
  const Json resolved{{"source", source}, {"split", split}, {"eps", eps},
                      {"k", k_req},       {"reps", reps},   {"pit_bins", pit_bins},
                      {"quantile_levels", nq}, {"pools", pool_dirs}};
  write_manifest(out, "evaluate", ctx, resolved, inputs, Json{{"wall_seconds", timer.seconds()}});
}

inline void cmd_importance(const RunContext& ctx, std::ostream& log = std::cout) {
  Timer timer;
  Json ic = section(ctx.config, "importance");
  if (!ic.contains("pool")) throw ConfigError("importance.pool: required field missing");
  const LoadedPool lp = load_pool(ic["pool"].get<std::string>());
  ic.erase("pool");
  ImportanceConfig cfg = ic.get<ImportanceConfig>();
  if (!ic.contains("seed")) cfg.seed = derive_seed(ctx.seed, "importance");
  cfg.validate();
  std::array<double, 3> split{};
  const Json source = consumer_source(ctx, &lp, split);
  const Dataset d = load_data(source);
  const Dataset test = split_temporal(d, split).test;
  std::vector<const Model*> models;
  for (const auto& m : lp.pool.models) models.push_back(&m);
  const ImportanceReport rep = run_importance(models, test, cfg, ctx.workers);
  const Json j = rep;
  // Round trip through text so NaN is checked as it is written (null).
  validate_importance_report(Json::parse(j.dump()));

  OutputDir out(ctx.out);
  out.write("importance.json", j.dump(2) + "\n");
  std::ostringstream csv;
  write_preservation_csv(csv, rep);
  out.write("preservation.csv", csv.str());
  for (std::size_t a = 0; a < rep.delta0_predictors.size(); ++a) {
    log << "delta0 " << rep.delta0_predictors[a] << ": " << rep.delta0[a].mean << '\n';
  }
  Json inputs = input_hashes(source);
  for (const auto& f : lp.files) inputs[f] = sha256_file(f);
  const Json resolved{{"source", source}, {"split", split}, {"importance", cfg}, {"pool", lp.path}};
  write_manifest(out, "importance", ctx, resolved, inputs, Json{{"wall_seconds", timer.seconds()}});
}

inline void run_command(const std::string& name, const RunContext& ctx, std::ostream& log = std::cout) {
  if (name == "synth") cmd_synth(ctx, log);
  else if (name == "train") cmd_train(ctx, log);
  else if (name == "evaluate") cmd_evaluate(ctx, log);
  else if (name == "importance") cmd_importance(ctx, log);
  else throw ConfigError("unknown command '" + name + "'");
}

/// 0 success, 2 configuration or input error, 3 numeric failure.
inline int exit_code_for(const std::exception_ptr& e, std::ostream& err) {
  try {
    std::rethrow_exception(e);
  } catch (const NumericError& x) {
    err << "error: numeric failure: " << x.what() << '\n';
    return 3;
  } catch (const ConfigError& x) {
    err << "error: " << x.what() << '\n';
  } catch (const DomainError& x) {
    err << "error: " << x.what() << '\n';
  } catch (const ContractError& x) {
    err << "error: " << x.what() << '\n';
  } catch (const IoError& x) {
    err << "error: " << x.what() << '\n';
  } catch (const Json::exception& x) {
    err << "error: invalid input: " << x.what() << '\n';
  } catch (const fs::filesystem_error& x) {
    err << "error: " << x.what() << '\n';
  } catch (const std::exception& x) {
    err << "error: " << x.what() << '\n';
  }
  return 2;
}

}  // namespace enspost::cli
