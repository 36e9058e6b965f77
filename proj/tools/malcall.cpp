// malcall: command-line driver for the detection pipeline.
//
//   malcall <command> [--config <json>] [--seed <int>] [--out <dir>]
//
// Commands: generate, featurize, train, evaluate, ablate, importance, bench,
// compare-baseline. On success a one-line JSON status goes to stdout; on
// failure a JSON error object goes to stderr and the exit code is nonzero.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "malcall/experiments.hpp"

namespace fs = std::filesystem;
using namespace malcall;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFailure = 1;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

nlohmann::json load_config(const Options& o) {
  if (o.config.empty()) return nlohmann::json::object();
  return read_json_file(o.config);
}

ExperimentSpec load_spec(const Options& o) {
  auto j = load_config(o);
  if (o.seed) j["seed"] = *o.seed;
  return spec_from_json(j);
}

nlohmann::json status(const std::string& command, const Options& o, nlohmann::json extra = nlohmann::json::object()) {
  extra["status"] = "ok";
  extra["command"] = command;
  extra["out"] = o.out;
  return extra;
}

nlohmann::json cmd_generate(const Options& o) {
  auto j = load_config(o);
  if (j.contains("generator")) j = j["generator"];
  auto cfg = config_from_json(j);
  if (o.seed) cfg.seed = *o.seed;
  const auto g = generate_log(cfg);
  const fs::path out(o.out);
  std::ostringstream log;
  write_jsonl(log, g.log);
  write_text(out / "log.jsonl", log.str());
  write_json(out / "meta.json", meta_to_json(g.log.meta()));
  write_json(out / "labels.json", labels_to_json(g.labels));
  write_json(out / "config.json", {{"tool", "malcall"}, {"version", kVersion}, {"seed", cfg.seed},
                                   {"generator", config_to_json(cfg)}});

  std::size_t malicious_records = 0, mirrors = 0;
  for (const auto& r : g.log.records()) {
    if (is_malicious(r.call_tag)) ++malicious_records;
    if (g.log.is_mirror(r)) ++mirrors;
  }
  std::size_t n_mal = 0;
  for (const auto& [p, m] : g.labels) n_mal += m;
  Table t{"summary", {"metric", "value"}, {}};
  t.add({"records", g.log.size()});
  t.add({"malicious_tagged_records", malicious_records});
  t.add({"touchpal_pair_mirror_records", mirrors});
  t.add({"touchpal_users", g.log.meta().touchpal_users.size()});
  t.add({"malicious_numbers", n_mal});
  t.add({"benign_numbers", g.labels.size() - n_mal});
  t.add({"seed", cfg.seed});
  write_table(out, t);
  return status("generate", o, {{"records", g.log.size()}});
}

nlohmann::json cmd_featurize(const Options& o) {
  const auto spec = load_spec(o);
  const auto d = prepare_data(spec);
  const auto sel = FeatureSelector::parse(spec.selector);
  const fs::path out(o.out);
  Table t{"featurize", {"split", "rows", "positive_rows", "width", "schema_fingerprint"}, {}};
  for (const auto& [name, xs] : {std::pair{"train", &d.train}, std::pair{"test", &d.test}}) {
    const auto ds = build_dataset(*xs, sel, Sampling::all_benign());
    write_text(out / (std::string(name) + "_features.csv"), dataset_csv(ds));
    auto manifest = dataset_manifest(ds, Sampling::all_benign());
    manifest["split"] = name;
    manifest["seed"] = spec.seed;
    write_json(out / (std::string(name) + "_features.json"), manifest);
    t.add({name, ds.rows(), ds.positives(), ds.cols, ds.schema->fingerprint()});
  }
  auto report = report_header("featurize", spec);
  report["data"] = d.summary;
  write_json(out / "report.json", report);
  write_table(out, t);
  return status("featurize", o);
}

nlohmann::json cmd_train(const Options& o) {
  const auto spec = load_spec(o);
  const auto d = prepare_data(spec);
  const auto sel = FeatureSelector::parse(spec.selector);
  const fs::path out(o.out);
  const auto train = training_set(d, sel, spec.seed, 0);
  write_text(out / "datasets" / "train_r0.csv", dataset_csv(train));
  auto manifest = dataset_manifest(train, Sampling::balanced(sampling_seed(spec.seed, 0)));
  manifest["seed"] = spec.seed;
  write_json(out / "datasets" / "train_r0.json", manifest);
  Table t{"train", {"model", "rows", "positive_rows", "width", "schema_fingerprint", "file"}, {}};
  for (const auto& mc : spec.models) {
    const auto m = train_model(train, mc, model_seed(spec.seed, 0));
    const std::string name(to_string(mc.kind));
    const auto file = fs::path("models") / (name + ".json");
    write_text(out / file, serialize_model(m) + "\n");
    if (is_tree_kind(mc.kind)) write_text(out / "models" / (name + "_tree0.txt"), dump_tree(m, 0));
    t.add({name, train.rows(), train.positives(), train.cols, m.fingerprint(), file.string()});
  }
  auto report = report_header("train", spec);
  report["data"] = d.summary;
  report["training_set"] = manifest;
  write_json(out / "report.json", report);
  write_table(out, t);
  return status("train", o);
}

nlohmann::json cmd_evaluate(const Options& o) {
  const auto spec = load_spec(o);
  const auto d = prepare_data(spec);
  const auto res = run_experiment(spec, d, fs::path(o.out), "evaluate");
  nlohmann::json auc = nlohmann::json::object();
  for (const auto& r : res.runs) auc[std::string(to_string(r.config.kind))] = r.mean.auc;
  return status("evaluate", o, {{"auc", auc}});
}

nlohmann::json cmd_ablate(const Options& o) {
  const auto spec = load_spec(o);
  const auto d = prepare_data(spec);
  const auto a = ablation_suite(spec, d);
  const fs::path out(o.out);
  auto report = report_header("ablate", spec);
  report["data"] = d.summary;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : a.cells) cells.push_back(to_json(c));
  report["cells"] = cells;
  write_json(out / "report.json", report);
  write_table(out, a.auc);
  write_table(out, a.afp);
  return status("ablate", o);
}

nlohmann::json cmd_importance(const Options& o) {
  const auto spec = load_spec(o);
  const auto d = prepare_data(spec);
  const auto r = importance_and_top10(spec, d);
  const fs::path out(o.out);
  auto report = report_header("importance", spec);
  report["data"] = d.summary;
  report["internal_nodes"] = r.internal_nodes;
  nlohmann::json top = nlohmann::json::array();
  for (auto f : r.top10) top.push_back(std::string(feature_name(f)));
  report["top10"] = top;
  report["all"] = to_json(r.all);
  report["top10_result"] = to_json(r.top);
  write_json(out / "report.json", report);
  write_table(out, r.features);
  write_table(out, r.auc);
  write_text(out / "forest_tree0.txt", r.tree_dump);
  return status("importance", o, {{"top10", top}});
}

nlohmann::json cmd_bench(const Options& o) {
  auto j = load_config(o);
  if (o.seed) j["seed"] = *o.seed;
  BenchConfig bc;
  if (auto it = j.find("bench"); it != j.end()) {
    bc.iterations = it->value("iterations", bc.iterations);
    bc.repetitions = it->value("repetitions", bc.repetitions);
    bc.max_history = it->value("max_history", bc.max_history);
    bc.pool = it->value("pool", bc.pool);
    j.erase("bench");
  }
  const auto spec = spec_from_json(j);
  const auto d = prepare_data(spec);
  const auto train = training_set(d, FeatureSelector::parse(spec.selector), spec.seed, 0);
  std::vector<TrainedModel> models;
  for (const auto& mc : spec.models) models.push_back(train_model(train, mc, model_seed(spec.seed, 0)));
  const auto inputs = collect_bench_inputs(d.log, spec.features, bc.pool, static_cast<std::size_t>(bc.max_history));
  const auto t = bench_latency(models, inputs, bc);
  const fs::path out(o.out);
  auto report = report_header("bench", spec);
  report["bench"] = {{"iterations", bc.iterations}, {"repetitions", bc.repetitions},
                     {"max_history", bc.max_history}, {"pool", inputs.size()}};
  report["latency"] = t.to_json();
  write_json(out / "report.json", report);
  write_table(out, t);
  return status("bench", o);
}

nlohmann::json cmd_compare_baseline(const Options& o) {
  auto j = load_config(o);
  const fs::path out(o.out);
  if (j.contains("result")) {  // an evaluation report from an earlier run
    write_table(out, compare_baseline(j));
    return status("compare-baseline", o);
  }
  if (o.seed) j["seed"] = *o.seed;
  const auto spec = spec_from_json(j);
  const auto d = prepare_data(spec);
  const auto res = run_experiment(spec, d, std::nullopt);
  write_experiment(out, "compare-baseline", spec, res);
  write_table(out, compare_baseline(res, spec.eval.M));
  return status("compare-baseline", o);
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"status", "error"}, {"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"malicious-call early detection pipeline"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options opt;

  struct Command {
    const char* name;
    const char* help;
    nlohmann::json (*run)(const Options&);
  };
  const Command commands[] = {
      {"generate", "generate a synthetic call log", cmd_generate},
      {"featurize", "extract and encode features for the train/test windows", cmd_featurize},
      {"train", "train every configured model on the first resample", cmd_train},
      {"evaluate", "run the resampled train/test experiment", cmd_evaluate},
      {"ablate", "feature-set ablation table", cmd_ablate},
      {"importance", "forest split-usage ranking and top-10 re-run", cmd_importance},
      {"bench", "per-prediction latency benchmark", cmd_bench},
      {"compare-baseline", "model AFP against the blacklist baseline", cmd_compare_baseline},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opt.config, "JSON config file");
    sub->add_option("--seed", opt.seed, "seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage_error", e.what());
    return kExitUsage;
  }

  try {
    for (const auto& [sub, cmd] : subs)
      if (sub->parsed()) {
        std::cout << cmd->run(opt).dump() << '\n';
        return EXIT_SUCCESS;
      }
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return kExitFailure;
  } catch (const nlohmann::json::exception& e) {
    print_error("config_error", e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    print_error("internal_error", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
