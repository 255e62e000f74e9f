#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "crs/bench.hpp"
#include "crs/classifier.hpp"
#include "crs/ensemble.hpp"
#include "crs/error.hpp"
#include "crs/eval.hpp"
#include "crs/explain.hpp"
#include "crs/ingest.hpp"
#include "crs/label_store.hpp"
#include "crs/service.hpp"

namespace fs = std::filesystem;
using crs::Json;

namespace {

Json default_config() {
  return Json::parse(R"({
    "seed": 7,
    "schema": "schema.txt",
    "synthetic": {"n": 524, "prevalence": 0.8072519083969466, "signalStrength": 1.0, "seed": 7},
    "ingest": {"input": "synthetic_cohort.csv", "imputation": "none"},
    "split": {"testFraction": 0.2},
    "models": {},
    "ensemble": {"tieBreak": "mlp", "weights": []},
    "explain": {"model": "vote", "repeats": 30, "shapBudget": 2048, "backgroundSize": 100, "shapRows": 10},
    "bench": {"model": "vote", "k": 10},
    "serve": {"host": "127.0.0.1", "port": 8080, "model": "vote", "threshold": 0.5,
              "raterTokens": {}, "adminTokens": [], "guidance": []}
  })");
}

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

struct Context {
  Json config;
  fs::path configDir = ".";
  fs::path dataDir = "artifacts";
  std::uint64_t seed = 7;
  std::string command;
  std::vector<std::string> artifacts;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : configDir / path;
  }
  fs::path data(const std::string& name) const { return dataDir / name; }
  void wrote(const fs::path& p) {
    const auto rel = fs::relative(p, dataDir);
    const bool inside = !rel.empty() && *rel.begin() != "..";
    artifacts.push_back(inside ? rel.generic_string() : fs::weakly_canonical(p).generic_string());
  }

  crs::Schema schema() const { return crs::Schema::load(resolve(config.at("schema").get<std::string>())); }
  crs::LabeledDataset dataset(const std::string& name) const {
    return crs::LabeledDataset::from_csv(crs::read_csv(data(name)), schema());
  }

  void write_manifest() {
    fs::create_directories(data("manifests"));
    const Json m{{"command", command},
                 {"seed", seed},
                 {"configHash", sha256_hex(config.dump())},
                 {"artifacts", artifacts}};
    crs::write_text(data("manifests") / (command + ".json"), m.dump(2) + "\n");
  }
};

Json model_config(const Context& ctx, const std::string& kind) {
  Json cfg = ctx.config.at("models").value(kind, Json::object());
  if (!cfg.contains("seed")) cfg["seed"] = ctx.seed;
  return cfg;
}

std::unique_ptr<crs::Classifier> load_model(const Context& ctx, const std::string& name) {
  const auto path = ctx.data("models") / (name + ".jsonl");
  if (!fs::exists(path)) throw crs::Error(crs::ErrorCode::IoError, "no trained model at " + path.string());
  return crs::load_classifier(path);
}

std::vector<std::string> saved_models(const Context& ctx) {
  std::vector<std::string> names;
  if (!fs::exists(ctx.data("models"))) return names;
  for (const auto& e : fs::directory_iterator(ctx.data("models"))) {
    if (e.path().extension() == ".jsonl") names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::map<std::string, int> truth_of(const crs::LabeledDataset& d) {
  std::map<std::string, int> t;
  for (crs::Index i = 0; i < d.rows(); ++i) t[d.ids[static_cast<std::size_t>(i)]] = d.y(i);
  return t;
}

// ---------------------------------------------------------------------------

void cmd_synth(Context& ctx, const std::string& shape, std::string out) {
  const auto schema = ctx.schema();
  crs::RawCohort raw;
  if (shape.empty()) {
    const Json& s = ctx.config.at("synthetic");
    crs::SyntheticSpec spec;
    spec.n = s.value("n", spec.n);
    spec.prevalence = s.value("prevalence", spec.prevalence);
    spec.signalStrength = s.value("signalStrength", spec.signalStrength);
    spec.seed = s.value("seed", spec.seed);
    raw = crs::generate_synthetic(spec, schema);
  } else if (shape == "2r01") {
    raw = crs::generate_shaped(crs::shape_2r01(), schema);
  } else if (shape == "3r01") {
    raw = crs::generate_shaped(crs::shape_3r01(), schema);
  } else {
    throw crs::Error(crs::ErrorCode::InvalidArgument, "unknown shape '" + shape + "'");
  }
  const fs::path path = out.empty() ? ctx.data("raw_cohort.csv") : fs::path(out);
  crs::write_csv(path, raw.to_csv());
  ctx.wrote(path);
}

void cmd_ingest(Context& ctx, std::vector<std::string> inputs) {
  const auto schema = ctx.schema();
  const Json& cfg = ctx.config.at("ingest");
  if (inputs.empty()) inputs.push_back(ctx.resolve(cfg.at("input").get<std::string>()).string());
  crs::CleanOptions options;
  const auto imputation = cfg.value("imputation", std::string("none"));
  if (imputation == "median") {
    options.imputation = crs::Imputation::Median;
  } else if (imputation == "mode") {
    options.imputation = crs::Imputation::Mode;
  } else if (imputation != "none") {
    throw crs::Error(crs::ErrorCode::InvalidArgument, "imputation must be none, median or mode");
  }

  std::optional<crs::LabeledDataset> merged;
  std::string reports;
  for (const auto& in : inputs) {
    auto raw = crs::RawCohort::from_csv(crs::read_csv(in), fs::path(in).stem().string());
    auto [data, report] = crs::clean_cohort(raw, schema, options);
    reports += report.to_jsonl();
    merged = merged ? crs::merge_cohorts(*merged, data) : std::move(data);
  }
  crs::write_csv(ctx.data("cohort.csv"), merged->to_csv());
  crs::write_text(ctx.data("clean_report.jsonl"), reports);
  ctx.wrote(ctx.data("cohort.csv"));
  ctx.wrote(ctx.data("clean_report.jsonl"));
}

void cmd_split(Context& ctx) {
  const auto data = ctx.dataset("cohort.csv");
  const double fraction = ctx.config.at("split").value("testFraction", 0.2);
  const auto split = crs::stratified_split(data, fraction, ctx.seed);
  crs::write_csv(ctx.data("train.csv"), data.subset(split.trainRows).to_csv());
  crs::write_csv(ctx.data("test.csv"), data.subset(split.testRows).to_csv());
  const Json ids{{"fraction", fraction}, {"seed", ctx.seed}, {"train", split.trainIds}, {"test", split.testIds}};
  crs::write_text(ctx.data("split.json"), ids.dump(2) + "\n");
  for (const char* f : {"train.csv", "test.csv", "split.json"}) ctx.wrote(ctx.data(f));
}

void cmd_train(Context& ctx, const std::string& which) {
  const auto train = ctx.dataset("train.csv");
  std::vector<std::string> kinds = which == "all" ? crs::base_model_kinds() : std::vector<std::string>{which};
  fs::create_directories(ctx.data("models"));
  for (const auto& kind : kinds) {
    auto model = crs::make_classifier(kind, model_config(ctx, kind));
    model->fit(train);
    const auto path = ctx.data("models") / (kind + ".jsonl");
    crs::save_classifier(*model, path);
    ctx.wrote(path);
    std::cout << "trained " << kind << "\n";
  }
}

void cmd_ensemble(Context& ctx, const std::string& kind) {
  const Json& cfg = ctx.config.at("ensemble");
  std::unique_ptr<crs::Classifier> model;
  if (kind == "vote" || kind == "soft") {
    const auto names = cfg.value("members", crs::base_model_kinds());
    crs::Members members;
    for (const auto& n : names) members.push_back(load_model(ctx, n));
    if (kind == "vote") {
      model = std::make_unique<crs::VoteClassifier>(std::move(members), cfg.value("tieBreak", std::string("mlp")));
    } else {
      auto weights = cfg.value("weights", std::vector<double>{});
      if (weights.empty()) weights.assign(members.size(), 1.0);
      model = std::make_unique<crs::SoftVoteClassifier>(std::move(members), std::move(weights));
    }
  } else {
    model = crs::make_classifier(kind, model_config(ctx, kind));
    model->fit(ctx.dataset("train.csv"));
  }
  fs::create_directories(ctx.data("models"));
  const auto path = ctx.data("models") / (kind + ".jsonl");
  crs::save_classifier(*model, path);
  ctx.wrote(path);
}

void cmd_evaluate(Context& ctx, std::vector<std::string> names, const std::string& on) {
  const auto test = ctx.dataset(on);
  if (test.count(0) == 0 || test.count(1) == 0) {
    throw crs::Error(crs::ErrorCode::DegenerateClass, on + " holds a single class; metrics are undefined");
  }
  if (names.empty()) names = saved_models(ctx);
  if (names.empty()) throw crs::Error(crs::ErrorCode::IoError, "no trained models to evaluate");
  fs::create_directories(ctx.data("reports"));
  std::string all;
  for (const auto& name : names) {
    const auto model = load_model(ctx, name);
    const auto r = crs::report(crs::confusion(test.y, model->predict(test.X)));
    crs::write_text(ctx.data("reports") / ("eval_" + name + ".jsonl"), r.to_jsonl(name));
    ctx.wrote(ctx.data("reports") / ("eval_" + name + ".jsonl"));
    all += r.to_text(name) + "\n";
  }
  crs::write_text(ctx.data("reports") / "evaluation.txt", all);
  ctx.wrote(ctx.data("reports") / "evaluation.txt");
  std::cout << all;
}

void cmd_explain(Context& ctx, const std::string& what, std::string name) {
  const Json& cfg = ctx.config.at("explain");
  if (name.empty()) name = cfg.value("model", std::string("vote"));
  fs::create_directories(ctx.data("reports"));
  const auto train = ctx.dataset("train.csv");
  fs::path out;
  if (what == "perm") {
    const auto model = load_model(ctx, name);
    const auto imp = crs::permutation_importance(*model, ctx.dataset("test.csv"), cfg.value("repeats", 30), ctx.seed);
    out = ctx.data("reports") / ("importance_" + name + ".csv");
    crs::write_text(out, imp.to_csv());
  } else if (what == "shap") {
    const auto model = load_model(ctx, name);
    const auto test = ctx.dataset("test.csv");
    const auto bg = crs::shap_background(train, cfg.value("backgroundSize", 100), ctx.seed);
    const auto rows = std::min<crs::Index>(cfg.value("shapRows", 10), test.rows());
    crs::CsvTable t;
    t.header = {"case_id", "base_value", "output"};
    for (const auto& f : test.features.names) t.header.push_back(f);
    for (crs::Index i = 0; i < rows; ++i) {
      const auto r = crs::shap_values(*model, test.X.row(i), bg, cfg.value("shapBudget", 2048), ctx.seed);
      std::vector<std::string> line{test.ids[static_cast<std::size_t>(i)], crs::format_number(r.baseValue),
                                    crs::format_number(r.fx)};
      for (crs::Index j = 0; j < r.phi.size(); ++j) line.push_back(crs::format_number(r.phi(j)));
      t.rows.push_back(std::move(line));
    }
    out = ctx.data("reports") / ("shap_" + name + ".csv");
    crs::write_csv(out, t);
  } else if (what == "pca") {
    const auto p = crs::pca(train.X);
    crs::CsvTable t;
    t.header = {"component", "eigenvalue", "explained_ratio", "cumulative_ratio"};
    for (const auto& f : train.features.names) t.header.push_back(f);
    for (crs::Index c = 0; c < p.eigenvalues.size(); ++c) {
      std::vector<std::string> line{std::to_string(c + 1), crs::format_number(p.eigenvalues(c)),
                                    crs::format_number(p.explainedVarianceRatio(c)),
                                    crs::format_number(p.cumulativeRatio(c))};
      for (crs::Index j = 0; j < p.loadings.rows(); ++j) line.push_back(crs::format_number(p.loadings(j, c)));
      t.rows.push_back(std::move(line));
    }
    out = ctx.data("reports") / "pca.csv";
    crs::write_csv(out, t);
  } else if (what == "corr") {
    const auto c = crs::correlation_matrix(train.X);
    crs::CsvTable t;
    t.header = {"feature"};
    for (const auto& f : train.features.names) t.header.push_back(f);
    for (crs::Index i = 0; i < c.rows(); ++i) {
      std::vector<std::string> line{train.features.names[static_cast<std::size_t>(i)]};
      for (crs::Index j = 0; j < c.cols(); ++j) line.push_back(crs::format_number(c(i, j)));
      t.rows.push_back(std::move(line));
    }
    out = ctx.data("reports") / "correlation.csv";
    crs::write_csv(out, t);
  } else {
    throw crs::Error(crs::ErrorCode::InvalidArgument, "explain expects perm, shap, pca or corr");
  }
  ctx.wrote(out);
}

void cmd_bench(Context& ctx, const std::string& what, const std::string& labelsPath) {
  const Json& cfg = ctx.config.at("bench");
  const auto test = ctx.dataset("test.csv");
  fs::create_directories(ctx.data("bench"));
  if (what == "stratify") {
    const auto model = load_model(ctx, cfg.value("model", std::string("vote")));
    const auto p = model->predict_proba(test.X);
    std::vector<std::pair<std::string, double>> probs;
    for (crs::Index i = 0; i < test.rows(); ++i) probs.emplace_back(test.ids[static_cast<std::size_t>(i)], p(i));
    const auto subset = crs::stratify_by_uncertainty(probs, cfg.value("k", 10));
    const auto ratio = crs::class_ratio_check(subset, truth_of(test));
    crs::write_csv(ctx.data("bench") / "subset.csv", subset.to_csv());
    const Json r{{"populationShare", ratio.populationShare},
                 {"subsetShare", ratio.subsetShare},
                 {"flagged", ratio.flagged}};
    crs::write_text(ctx.data("bench") / "class_ratio.json", r.dump(2) + "\n");
    ctx.wrote(ctx.data("bench") / "subset.csv");
    ctx.wrote(ctx.data("bench") / "class_ratio.json");
    return;
  }
  if (what != "report") throw crs::Error(crs::ErrorCode::InvalidArgument, "bench expects stratify or report");

  const auto subset = crs::BenchmarkSubset::from_csv(crs::read_csv(ctx.data("bench") / "subset.csv"));
  std::vector<crs::ExpertLabel> history;
  if (!labelsPath.empty()) {
    history = crs::labels_from_csv(crs::read_csv(labelsPath));
  } else {
    crs::LabelStore store(ctx.data("labels"), {});
    history = store.all_revisions();
  }
  const auto truth = truth_of(test);
  const auto calls = crs::calls_from_labels(history);
  const auto tiers = crs::tier_accuracy(calls, truth, subset);

  crs::CsvTable tt;
  tt.header = {"rater", "hard", "medium", "easy"};
  for (const auto& [rater, acc] : tiers.perRater) {
    tt.rows.push_back({rater, crs::format_number(acc[0]), crs::format_number(acc[1]), crs::format_number(acc[2])});
  }
  tt.rows.push_back({"pooled", crs::format_number(tiers.pooled[0]), crs::format_number(tiers.pooled[1]),
                     crs::format_number(tiers.pooled[2])});

  crs::CsvTable pt;
  pt.header = {"case_id", "votes_0", "votes_1", "confidence_0", "confidence_1", "decision", "method", "truth"};
  for (const auto& [id, d] : crs::panel_decisions(history)) {
    const auto t = truth.find(id);
    pt.rows.push_back({id, std::to_string(d.votes[0]), std::to_string(d.votes[1]), std::to_string(d.confidence[0]),
                       std::to_string(d.confidence[1]), std::to_string(d.decision), crs::to_string(d.method),
                       t == truth.end() ? "" : std::to_string(t->second)});
  }

  const std::vector<std::pair<std::string, crs::CsvTable>> outputs{
      {"tiers.csv", tt},
      {"panel.csv", pt},
      {"raters.csv", crs::rater_report_csv(crs::rater_report(calls, truth))},
      {"labels.csv", crs::labels_to_csv(history)}};
  for (const auto& [file, table] : outputs) {
    crs::write_csv(ctx.data("bench") / file, table);
    ctx.wrote(ctx.data("bench") / file);
  }
}

crs::Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

void cmd_serve(Context& ctx, int port) {
  const Json& cfg = ctx.config.at("serve");
  const auto schema = ctx.schema();

  crs::ModelRegistry registry;
  for (const auto& name : saved_models(ctx)) registry.add(name, load_model(ctx, name));
  const auto active = cfg.value("model", std::string("vote"));
  if (!registry.names().empty()) registry.activate(active);
  registry.set_threshold(cfg.value("threshold", 0.5));

  crs::ServiceConfig sc;
  sc.raterTokens = cfg.value("raterTokens", std::map<std::string, std::string>{});
  const auto admins = cfg.value("adminTokens", std::vector<std::string>{});
  sc.adminTokens = {admins.begin(), admins.end()};
  sc.guidance = cfg.value("guidance", std::vector<std::string>{});
  sc.shapBudget = ctx.config.at("explain").value("shapBudget", 2048);
  sc.seed = ctx.seed;

  auto cases = ctx.dataset("test.csv");
  if (fs::exists(ctx.data("bench") / "subset.csv")) {
    const auto subset = crs::BenchmarkSubset::from_csv(crs::read_csv(ctx.data("bench") / "subset.csv"));
    std::vector<std::string> ids;
    for (const auto& c : subset.cases) ids.push_back(c.id);
    cases = cases.subset_by_id(ids);
  }
  crs::LabelStore::Options lo;
  for (const auto& [token, rater] : sc.raterTokens) lo.raters.insert(rater);
  lo.cases = {cases.ids.begin(), cases.ids.end()};
  crs::LabelStore store(ctx.data("labels"), lo);

  Json global = Json::array();
  const auto impPath = ctx.data("reports") / ("importance_" + active + ".csv");
  if (fs::exists(impPath)) {
    const auto t = crs::read_csv(impPath);
    for (const auto& row : t.rows) global.push_back(Json{{"feature", row[0]}, {"importance", std::stod(row[1])}});
  }
  const auto background = crs::shap_background(ctx.dataset("train.csv"), ctx.config.at("explain").value("backgroundSize", 100), ctx.seed);

  crs::Service service(schema, registry, store, sc, std::move(cases), background, global);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto host = cfg.value("host", std::string("127.0.0.1"));
  if (port == 0) port = cfg.value("port", 8080);
  ctx.write_manifest();
  std::cout << "listening on " << host << ":" << port << std::endl;
  if (!service.serve(host, port)) {
    throw crs::Error(crs::ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  g_service = nullptr;
}

void fail(std::string_view code, const std::string& message) {
  std::cerr << Json{{"error", std::string(code)}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CRS surgical-outcome prediction toolkit"};
  app.require_subcommand(1);
  std::string configPath;
  std::optional<std::uint64_t> seedOverride;
  std::string dataDir = "artifacts";
  int port = 0;
  app.add_option("--config", configPath, "JSON config; relative paths in it resolve against its directory");
  app.add_option("--seed", seedOverride, "Overrides the config seed");
  app.add_option("--data-dir", dataDir, "Artifact directory")->capture_default_str();
  app.add_option("--port", port, "HTTP port for serve");

  std::string shape, synthOut;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic raw cohort");
  synth->add_option("--shape", shape, "Multi-stage export layout: 2r01 or 3r01");
  synth->add_option("--out", synthOut, "Output file (default <data-dir>/raw_cohort.csv)");

  std::vector<std::string> inputs;
  auto* ingest = app.add_subcommand("ingest", "Clean and label raw cohort exports");
  ingest->add_option("--input", inputs, "Raw cohort file(s); several are merged");

  auto* split = app.add_subcommand("split", "Stratified train/test split");

  std::string trainWhich;
  auto* train = app.add_subcommand("train", "Fit a base model or all of them");
  train->add_option("model", trainWhich, "lr, svm, nb, rf, xgb, mlp, stack, ada or all")->required();

  std::string ensembleKind = "vote";
  auto* ensemble = app.add_subcommand("ensemble", "Assemble or fit an ensemble");
  ensemble->add_option("kind", ensembleKind, "vote, soft, stack or ada")->capture_default_str();

  std::vector<std::string> evalModels;
  std::string evalOn = "test.csv";
  auto* evaluate = app.add_subcommand("evaluate", "Classification reports on the held-out split");
  evaluate->add_option("--model", evalModels, "Model names (default: every trained model)");
  evaluate->add_option("--data", evalOn, "Dataset file inside the data dir")->capture_default_str();

  std::string explainWhat, explainModel;
  auto* explain = app.add_subcommand("explain", "Feature importance and structure");
  explain->add_option("what", explainWhat, "perm, shap, pca or corr")->required();
  explain->add_option("--model", explainModel, "Model name (default from config)");

  std::string benchWhat, labelsPath;
  auto* bench = app.add_subcommand("bench", "Expert benchmark subset and panel report");
  bench->add_option("what", benchWhat, "stratify or report")->required();
  bench->add_option("--labels", labelsPath, "Label table (default: the service label store)");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    fail("UsageError", e.what());
    return 2;
  }

  Context ctx;
  try {
    ctx.config = default_config();
    if (!configPath.empty()) {
      ctx.config.merge_patch(Json::parse(crs::read_text(configPath)));
      ctx.configDir = fs::path(configPath).parent_path();
      if (ctx.configDir.empty()) ctx.configDir = ".";
    }
    if (seedOverride) ctx.config["seed"] = *seedOverride;
    ctx.seed = ctx.config.at("seed").get<std::uint64_t>();
    ctx.dataDir = dataDir;
    fs::create_directories(ctx.dataDir);
    ctx.command = app.get_subcommands().front()->get_name();
    for (const auto& arg : {trainWhich, explainWhat, benchWhat}) {
      if (!arg.empty()) ctx.command += "-" + arg;
    }
    if (ensemble->parsed()) ctx.command += "-" + ensembleKind;

    if (synth->parsed()) cmd_synth(ctx, shape, synthOut);
    if (ingest->parsed()) cmd_ingest(ctx, inputs);
    if (split->parsed()) cmd_split(ctx);
    if (train->parsed()) cmd_train(ctx, trainWhich);
    if (ensemble->parsed()) cmd_ensemble(ctx, ensembleKind);
    if (evaluate->parsed()) cmd_evaluate(ctx, evalModels, evalOn);
    if (explain->parsed()) cmd_explain(ctx, explainWhat, explainModel);
    if (bench->parsed()) cmd_bench(ctx, benchWhat, labelsPath);
    if (serve->parsed()) {
      cmd_serve(ctx, port);
      return 0;
    }
    ctx.write_manifest();
  } catch (const crs::Error& e) {
    fail(crs::to_string(e.code()), e.what());
    return 1;
  } catch (const Json::exception& e) {
    fail("ParseError", e.what());
    return 1;
  } catch (const std::exception& e) {
    fail("Internal", e.what());
    return 1;
  }
  return 0;
}
