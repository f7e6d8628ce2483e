#include "enspost/run.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>

using namespace enspost;
using namespace enspost::cli;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

fs::path scratch() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path p = fs::temp_directory_path() /
                     ("enspost_cli_" + std::string(info->test_suite_name()) + "_" + info->name() + "_" +
                      std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Result run(const fs::path& dir, const std::vector<std::string>& args, const std::string& env = "") {
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += quote(ENSPOST_CLI);
  for (const auto& a : args) cmd += " " + quote(a);
  const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
  cmd += " >" + quote(o.string()) + " 2>" + quote(e.string());
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(o);
  r.err = read_file(e);
  return r;
}

Json read_json(const fs::path& p) { return Json::parse(read_file(p)); }

/// Hashes of every file below `root` except timing.json.
std::map<std::string, std::string> tree_hashes(const fs::path& root) {
  std::map<std::string, std::string> h;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "timing.json") continue;
    h[fs::relative(e.path(), root).string()] = sha256_file(e.path());
  }
  return h;
}

const std::vector<std::string> kTiny{"--set", "synth.stations=3", "--set", "synth.days=200"};

std::vector<std::string> args(const std::string& cmd, const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> a{cmd, "--out", out.string()};
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

std::vector<std::string> tiny_train(const std::string& arch, int pool, int epochs = 2) {
  std::vector<std::string> a = kTiny;
  for (const std::string& s : std::vector<std::string>{"model.architecture=" + arch, "train.pool_size=" + std::to_string(pool),
                               "model.max_epochs=" + std::to_string(epochs), "model.latent=8", "model.heads=2",
                               "model.blocks=1", "model.encoder_hidden=8", "model.decoder_hidden=8"}) {
    a.push_back("--set");
    a.push_back(s);
  }
  return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// In-process pieces

TEST(Schema, EmbeddedCopiesMatchPublishedFiles) {
  EXPECT_EQ(read_json(fs::path(ENSPOST_DOCS) / "run_config.schema.json"), run_config_schema());
  EXPECT_EQ(read_json(fs::path(ENSPOST_DOCS) / "importance_report.schema.json"), importance_report_schema());
}

TEST(Schema, ValidatorKeywords) {
  const Json schema = Json::parse(R"({
    "type": "object", "additionalProperties": false, "required": ["a"],
    "definitions": {"pos": {"type": "number", "exclusiveMinimum": 0}},
    "properties": {
      "a": {"type": "integer", "minimum": 1, "maximum": 3},
      "b": {"enum": ["x", "y"]},
      "c": {"type": "array", "minItems": 1, "maxItems": 2, "items": {"$ref": "#/definitions/pos"}},
      "d": {"type": "object", "additionalProperties": {"type": ["string", "null"]}}
    }})");
  const SchemaValidator v(schema);
  auto error = [&](const char* doc) -> std::string {
    try {
      v.validate(Json::parse(doc), "");
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_EQ(error(R"({"a": 2, "b": "y", "c": [0.5], "d": {"k": null}})"), "");
  EXPECT_EQ(error(R"({})"), "a: required field missing");
  EXPECT_EQ(error(R"({"a": 2, "z": 1})"), "z: unknown field");
  EXPECT_NE(error(R"({"a": 2.5})").find("a: expected integer"), std::string::npos);
  EXPECT_NE(error(R"({"a": 4})").find("a: must be <= 3"), std::string::npos);
  EXPECT_NE(error(R"({"a": 0})").find("a: must be >= 1"), std::string::npos);
  EXPECT_NE(error(R"({"a": 1, "b": "q"})").find("b: must be one of"), std::string::npos);
  EXPECT_NE(error(R"({"a": 1, "c": [1, 0]})").find("c[1]: must be > 0"), std::string::npos);
  EXPECT_NE(error(R"({"a": 1, "c": []})").find("c: needs at least 1"), std::string::npos);
  EXPECT_NE(error(R"({"a": 1, "c": [1, 2, 3]})").find("c: allows at most 2"), std::string::npos);
  EXPECT_NE(error(R"({"a": 1, "d": {"k": 3}})").find("d.k: expected"), std::string::npos);
}

TEST(Schema, RunConfigFieldsMatchModelAndSynthStructs) {
  // Every field the structs serialize is accepted by the schema.
  const Json cfg{{"seed", 3},
                 {"out", "x"},
                 {"synth", SynthConfig{}},
                 {"model", ModelConfig{}},
                 {"importance", ImportanceConfig{}},
                 {"train", Json{{"pool_size", 2}}},
                 {"eval", Json{{"pools", Json::array()}, {"k", 1}, {"reps", 1}, {"pit_bins", 20},
                               {"quantile_levels", 99}, {"eps", true}}}};
  EXPECT_NO_THROW(validate_run_config(cfg));
}

TEST(Schema, ExampleConfigValidates) {
  Json cfg = read_json(fs::path(ENSPOST_DOCS) / "example_config.json");
  cfg["out"] = "x";
  EXPECT_NO_THROW(validate_run_config(cfg));
  EXPECT_NO_THROW(model_config(cfg, 1));
  EXPECT_NO_THROW(synth_config(cfg, 1));
}

TEST(Overrides, DottedKeysAndValueParsing) {
  Json cfg = Json::object();
  apply_override(cfg, "model.latent=32");
  apply_override(cfg, "model.hidden=[8,4]");
  apply_override(cfg, "model.architecture=st-bqn");
  apply_override(cfg, "eval.eps=false");
  apply_override(cfg, "importance.pool=a=b");
  EXPECT_EQ(cfg["model"]["latent"], 32);
  EXPECT_EQ(cfg["model"]["hidden"], Json::parse("[8,4]"));
  EXPECT_EQ(cfg["model"]["architecture"], "st-bqn");
  EXPECT_EQ(cfg["eval"]["eps"], false);
  EXPECT_EQ(cfg["importance"]["pool"], "a=b");
  EXPECT_THROW(apply_override(cfg, "noequals"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "=3"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "model..x=3"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "model.latent.x=3"), ConfigError);
}

TEST(Resolve, PrecedenceAndRequiredOut) {
  const fs::path dir = scratch();
  write_file(dir / "c.json", R"({"seed": 5, "out": "from_file", "model": {"latent": 16}})");
  CommandLine cl;
  cl.config_path = (dir / "c.json").string();
  cl.sets = {"model.latent=32", "seed=6"};
  RunContext ctx = resolve(cl);
  EXPECT_EQ(ctx.seed, 6u);
  EXPECT_EQ(ctx.out, fs::path("from_file"));
  EXPECT_EQ(ctx.config["model"]["latent"], 32);
  EXPECT_FALSE(ctx.config.contains("out"));
  cl.seed = 9;
  cl.out = "flag";
  ctx = resolve(cl);
  EXPECT_EQ(ctx.seed, 9u);
  EXPECT_EQ(ctx.out, fs::path("flag"));
  EXPECT_THROW(resolve(CommandLine{}), ConfigError);
  CommandLine both;
  both.out = "x";
  both.sets = {"data.path=a", "synth.days=3"};
  EXPECT_THROW(resolve(both), ConfigError);
  write_file(dir / "bad.json", "{not json");
  CommandLine bad;
  bad.config_path = (dir / "bad.json").string();
  EXPECT_THROW(resolve(bad), ConfigError);
  CommandLine missing;
  missing.config_path = (dir / "absent.json").string();
  EXPECT_THROW(resolve(missing), IoError);
}

TEST(Resolve, WorkersFallBackToEnvironment) {
  ::setenv("ENSPOST_WORKERS", "3", 1);
  CommandLine cl;
  cl.out = "x";
  EXPECT_EQ(resolve(cl).workers, 3);
  cl.workers = 2;
  EXPECT_EQ(resolve(cl).workers, 2);
  ::unsetenv("ENSPOST_WORKERS");
  cl.workers = 0;
  EXPECT_EQ(resolve(cl).workers, 1);
}

TEST(Hashing, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

// ---------------------------------------------------------------------------
// synth

TEST(CmdSynth, DefaultConfigWritesStationsTimesDaysLines) {
  const fs::path dir = scratch();
  const Result r = run(dir, args("synth", dir / "s"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "T=30000 M=20 p=5 q=4\n");
  std::ifstream in(dir / "s" / "data.ndjson");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 20u * 1500u);
  const Json stats = read_json(dir / "s" / "data.stats.json");
  EXPECT_EQ(stats["predictors"].size(), 5u);
  EXPECT_EQ(stats["normalization"]["predictor_mean"].size(), 5u);
  const Json man = read_json(dir / "s" / "manifest.json");
  EXPECT_EQ(man["command"], "synth");
  EXPECT_EQ(man["outputs"]["data.ndjson"], sha256_file(dir / "s" / "data.ndjson"));
  EXPECT_TRUE(fs::exists(dir / "s" / "timing.json"));
}

TEST(CmdSynth, SeedDeterminesFileHash) {
  const fs::path dir = scratch();
  ASSERT_EQ(run(dir, args("synth", dir / "a", kTiny)).code, 0);
  ASSERT_EQ(run(dir, args("synth", dir / "b", kTiny)).code, 0);
  std::vector<std::string> other = kTiny;
  other.insert(other.end(), {"--seed", "2"});
  ASSERT_EQ(run(dir, args("synth", dir / "c", other)).code, 0);
  EXPECT_EQ(tree_hashes(dir / "a"), tree_hashes(dir / "b"));
  EXPECT_NE(sha256_file(dir / "a" / "data.ndjson"), sha256_file(dir / "c" / "data.ndjson"));
}

TEST(CmdSynth, GeneratedFileLoadsAsTrainingData) {
  const fs::path dir = scratch();
  ASSERT_EQ(run(dir, args("synth", dir / "s", kTiny)).code, 0);
  const std::string data = (dir / "s" / "data.ndjson").string();
  const Result r = run(dir, args("train", dir / "t",
                                 {"--set", "data.path=" + data, "--set", "train.pool_size=1", "--set",
                                  "model.max_epochs=1"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json man = read_json(dir / "t" / "manifest.json");
  EXPECT_EQ(man["inputs"][data], sha256_file(data));
}

TEST(CmdSynth, ErrorsMapToExitTwo) {
  const fs::path dir = scratch();
  Result r = run(dir, args("synth", dir / "s", {"--set", "synth.stattions=3"}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("synth.stattions"), std::string::npos) << r.err;
  r = run(dir, args("synth", dir / "s", {"--set", "synth.members=1"}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("synth.members"), std::string::npos) << r.err;
  write_file(dir / "file", "x");
  r = run(dir, args("synth", dir / "file" / "sub", kTiny));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("cannot create"), std::string::npos) << r.err;
  EXPECT_EQ(run(dir, {"synth"}).code, 2);
  EXPECT_EQ(run(dir, {"bogus", "--out", "x"}).code, 2);
  EXPECT_EQ(run(dir, {"synth", "--out", "x", "--set", "novalue"}).code, 2);
  EXPECT_EQ(run(dir, {"synth", "--out", "x", "--workers", "-1"}).code, 2);
}

// ---------------------------------------------------------------------------
// train

TEST(CmdTrain, TinyPoolCompletesQuicklyAndWritesManifest) {
  const fs::path dir = scratch();
  const Timer t;
  const Result r = run(dir, args("train", dir / "t", tiny_train("drn", 1)));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(t.seconds(), 60.0);
  ASSERT_TRUE(fs::exists(dir / "t" / "checkpoints" / "model_000.ckpt"));
  const Model m = load_checkpoint((dir / "t" / "checkpoints" / "model_000.ckpt").string());
  EXPECT_EQ(m.config.architecture, Architecture::drn);
  const Json reports = read_json(dir / "t" / "train_reports.json");
  EXPECT_EQ(reports["pool_size"], 1);
  EXPECT_EQ(reports["runs"][0]["seed"], 1);
  const Json man = read_json(dir / "t" / "manifest.json");
  EXPECT_EQ(man["resolved"]["model"]["seed"], 1);
  EXPECT_EQ(man["outputs"].size(), 2u);
  EXPECT_FALSE(man.dump().find("wall") != std::string::npos);
  EXPECT_TRUE(read_json(dir / "t" / "timing.json").contains("wall_seconds"));
}

TEST(CmdTrain, RerunAndWorkerCountGiveIdenticalOutputs) {
  const fs::path dir = scratch();
  const auto a = tiny_train("ed-drn", 3);
  ASSERT_EQ(run(dir, args("train", dir / "w1", a), "ENSPOST_WORKERS=1").code, 0);
  ASSERT_EQ(run(dir, args("train", dir / "w1b", a)).code, 0);
  std::vector<std::string> four = a;
  four.insert(four.end(), {"--workers", "4"});
  ASSERT_EQ(run(dir, args("train", dir / "w4", four)).code, 0);
  const auto h = tree_hashes(dir / "w1");
  EXPECT_EQ(h.size(), 5u);
  EXPECT_EQ(h, tree_hashes(dir / "w1b"));
  EXPECT_EQ(h, tree_hashes(dir / "w4"));
  EXPECT_EQ(read_json(dir / "w4" / "timing.json")["workers"], 4);
  ASSERT_EQ(run(dir, args("train", dir / "env", a), "ENSPOST_WORKERS=3").code, 0);
  EXPECT_EQ(read_json(dir / "env" / "timing.json")["workers"], 3);
  EXPECT_EQ(h, tree_hashes(dir / "env"));
}

TEST(CmdTrain, ExitCodes) {
  const fs::path dir = scratch();
  Result r = run(dir, args("train", dir / "t", {"--set", "data.path=" + (dir / "missing.ndjson").string()}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing.ndjson"), std::string::npos);
  r = run(dir, args("train", dir / "t", {"--set", "model.latnet=8"}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("model.latnet"), std::string::npos) << r.err;
  r = run(dir, args("train", dir / "t", {"--set", "model.latent=\"wide\""}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("model.latent"), std::string::npos) << r.err;
  r = run(dir, args("train", dir / "t", {"--set", "model.architecture=cnn"}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("model.architecture"), std::string::npos) << r.err;
  r = run(dir, args("train", dir / "t", {"--set", "model.latent=12", "--set", "model.heads=5"}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("model.heads"), std::string::npos) << r.err;
  auto bad = tiny_train("drn", 1);
  bad.insert(bad.end(), {"--set", "model.learning_rate=1e250"});
  r = run(dir, args("train", dir / "t", bad));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("numeric failure"), std::string::npos) << r.err;
}

// ---------------------------------------------------------------------------
// evaluate

TEST(CmdEvaluate, EpsOnlyMatchesRawEnsembleReport) {
  const fs::path dir = scratch();
  const Result r = run(dir, args("evaluate", dir / "e", kTiny));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json ev = read_json(dir / "e" / "evaluation.json");
  ASSERT_EQ(ev["methods"].size(), 1u);
  EXPECT_EQ(ev["methods"][0]["method"], "EPS");
  SynthConfig sc;
  sc.stations = 3;
  sc.days = 200;
  const Dataset test = split_temporal(generate_synthetic(sc), {0.7, 0.15, 0.15}).test;
  const EvaluationReport expect =
      raw_eps_report(test, test.primary, nominal_pi_level(20), kDefaultPitBins, derive_seed(1, "evaluate.eps"));
  EXPECT_EQ(ev["methods"][0]["report"].dump(), Json(expect).dump());
  EXPECT_NE(r.out.find("90.48%"), std::string::npos);
  EXPECT_EQ(read_file(dir / "e" / "evaluation.txt"), r.out);
  std::ifstream csv(dir / "e" / "pit.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  EXPECT_EQ(lines, 1u + 20u);
}

TEST(CmdEvaluate, FullPoolDrawsGiveIdenticalReports) {
  const fs::path dir = scratch();
  ASSERT_EQ(run(dir, args("train", dir / "t", tiny_train("bqn", 3))).code, 0);
  const Result r = run(dir, args("evaluate", dir / "e",
                                 {"--set", "eval.pools=[\"" + (dir / "t").string() + "\"]", "--set", "eval.k=3",
                                  "--set", "eval.reps=5"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json ev = read_json(dir / "e" / "evaluation.json");
  const Json& reps = ev["methods"][1]["resample"]["reports"];
  ASSERT_EQ(reps.size(), 5u);
  for (const auto& rep : reps) EXPECT_EQ(rep, reps[0]);
  EXPECT_EQ(ev["methods"][1]["resample"]["spread"], 0.0);
  EXPECT_EQ(ev["methods"][1]["method"], "BQN");
}

TEST(CmdEvaluate, TableHasRowPerMethodAndWorkerIndependentOutputs) {
  const fs::path dir = scratch();
  ASSERT_EQ(run(dir, args("train", dir / "drn", tiny_train("drn", 2))).code, 0);
  ASSERT_EQ(run(dir, args("train", dir / "bqn", tiny_train("bqn", 2))).code, 0);
  ASSERT_EQ(run(dir, args("train", dir / "drn2", tiny_train("drn", 2, 1))).code, 0);
  const std::string pools =
      "eval.pools=[\"" + (dir / "drn").string() + "\",\"" + (dir / "bqn").string() + "\",\"" + (dir / "drn2").string() + "\"]";
  const std::vector<std::string> a{"--set", pools, "--set", "eval.k=1", "--set", "eval.reps=4"};
  ASSERT_EQ(run(dir, args("evaluate", dir / "e1", a)).code, 0);
  std::vector<std::string> b = a;
  b.insert(b.end(), {"--workers", "4"});
  ASSERT_EQ(run(dir, args("evaluate", dir / "e4", b)).code, 0);
  EXPECT_EQ(tree_hashes(dir / "e1"), tree_hashes(dir / "e4"));
  const std::string table = read_file(dir / "e1" / "evaluation.txt");
  for (const char* row : {"\nEPS ", "\nDRN ", "\nBQN ", "\nDRN (2) "}) {
    EXPECT_NE(table.find(row), std::string::npos) << row << "\n" << table;
  }
  const Json ev = read_json(dir / "e1" / "evaluation.json");
  EXPECT_GT(ev["methods"][1]["resample"]["spread"].get<double>(), 0.0);
}

TEST(CmdEvaluate, MixedFamilyPoolExitsTwo) {
  const fs::path dir = scratch();
  ASSERT_EQ(run(dir, args("train", dir / "drn", tiny_train("drn", 1))).code, 0);
  ASSERT_EQ(run(dir, args("train", dir / "bqn", tiny_train("bqn", 1))).code, 0);
  fs::copy_file(dir / "bqn" / "checkpoints" / "model_000.ckpt", dir / "drn" / "checkpoints" / "model_001.ckpt");
  Result r = run(dir, args("evaluate", dir / "e", {"--set", "eval.pools=[\"" + (dir / "drn").string() + "\"]"}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("families"), std::string::npos) << r.err;
  r = run(dir, args("evaluate", dir / "e", {"--set", "eval.pools=[\"" + (dir / "nowhere").string() + "\"]"}));
  EXPECT_EQ(r.code, 2);
  r = run(dir, args("evaluate", dir / "e", {"--set", "eval.eps=false"}));
  EXPECT_EQ(r.code, 2);
}

// ---------------------------------------------------------------------------
// importance

TEST(CmdImportance, DeadChannelDefaultsAndSchema) {
  const fs::path dir = scratch();
  const Result t = run(dir, args("train", dir / "t",
                                 {"--set", "synth.stations=10", "--set", "synth.days=700", "--set",
                                  "split=[0.6,0.1,0.3]", "--set", "train.pool_size=2", "--set", "model.max_epochs=25"}));
  ASSERT_EQ(t.code, 0) << t.err;
  const Result r = run(dir, args("importance", dir / "i",
                                 {"--set", "importance.pool=" + (dir / "t").string(), "--set",
                                  "importance.predictors=[\"aux_dead\"]", "--set",
                                  "importance.statistics=[\"mean\",\"std\"]"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json rep = read_json(dir / "i" / "importance.json");
  EXPECT_EQ(rep["config"]["bins"], 100);
  EXPECT_EQ(rep["models"], 2);
  EXPECT_EQ(rep["delta0"].size(), 5u);
  EXPECT_LT(std::abs(rep["delta0"]["aux_dead"]["mean"].get<double>()), 1e-3);
  EXPECT_GT(rep["delta0"]["primary"]["mean"].get<double>(), 0.1);
  EXPECT_NO_THROW(SchemaValidator(read_json(fs::path(ENSPOST_DOCS) / "importance_report.schema.json"))
                      .validate(rep, "report"));
  std::ifstream csv(dir / "i" / "preservation.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  EXPECT_EQ(lines, 1u + 8u);
  EXPECT_NE(r.out.find("delta0 aux_dead"), std::string::npos);
}

TEST(CmdImportance, RerunAndWorkerCountGiveIdenticalOutputs) {
  const fs::path dir = scratch();
  ASSERT_EQ(run(dir, args("train", dir / "t", tiny_train("st-bqn", 2))).code, 0);
  const std::vector<std::string> a{"--set", "importance.pool=" + (dir / "t").string(), "--set", "importance.bins=10",
                                   "--set", "importance.predictors=[\"primary\",\"aux_skew\"]"};
  ASSERT_EQ(run(dir, args("importance", dir / "i1", a)).code, 0);
  ASSERT_EQ(run(dir, args("importance", dir / "i1b", a)).code, 0);
  std::vector<std::string> b = a;
  b.insert(b.end(), {"--workers", "4"});
  ASSERT_EQ(run(dir, args("importance", dir / "i4", b)).code, 0);
  const auto h = tree_hashes(dir / "i1");
  EXPECT_EQ(h, tree_hashes(dir / "i1b"));
  EXPECT_EQ(h, tree_hashes(dir / "i4"));
}

TEST(CmdImportance, ExitCodes) {
  const fs::path dir = scratch();
  Result r = run(dir, args("importance", dir / "i", kTiny));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("importance.pool"), std::string::npos) << r.err;
  ASSERT_EQ(run(dir, args("train", dir / "t", tiny_train("drn", 1))).code, 0);
  const std::string pool = "importance.pool=" + (dir / "t").string();
  r = run(dir, args("importance", dir / "i", {"--set", pool, "--set", "importance.bins=1"}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("importance.bins"), std::string::npos) << r.err;
  r = run(dir, args("importance", dir / "i", {"--set", pool, "--set", "importance.predictors=[\"nope\"]"}));
  EXPECT_EQ(r.code, 2);
  r = run(dir, args("importance", dir / "i", {"--set", pool, "--set", "importance.statistics=[\"median\"]"}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("importance.statistics[0]"), std::string::npos) << r.err;
}
