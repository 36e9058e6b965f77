#pragma once

// Experiment driver: spec parsing, train/test construction, resampled
// training and evaluation, ablations, feature importance, baseline comparison
// and the latency benchmark.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "malcall/blacklist.hpp"
#include "malcall/call_log.hpp"
#include "malcall/dataset.hpp"
#include "malcall/features.hpp"
#include "malcall/metrics.hpp"
#include "malcall/models.hpp"
#include "malcall/report.hpp"
#include "malcall/synthgen.hpp"

namespace malcall {

// Half-open day range [first_day, end_day) and caller regions (empty = all).
struct Window {
  int first_day = 0;
  int end_day = 0;
  std::vector<std::string> regions;
};

struct LogSource {
  std::string records;
  std::string meta;
  std::string labels;
};

enum class TestNumbers : std::uint8_t { all, unseen };

struct ExperimentSpec {
  GeneratorConfig generator;
  std::optional<LogSource> log;  // when set, the generator is not used
  Window train{0, 20, {}};
  Window test{20, 30, {}};
  std::vector<ModelConfig> models;
  std::string selector = "all";
  EvalConfig eval;
  int resamples = 5;
  std::uint64_t seed = 0;
  FeatureOptions features;
  bool continuous_stream = true;  // test-time counters include training-period records
  TestNumbers test_numbers = TestNumbers::all;

  ExperimentSpec() {
    for (auto k : {ModelKind::logistic, ModelKind::svm, ModelKind::mlp, ModelKind::forest, ModelKind::gbt}) {
      ModelConfig c;
      c.kind = k;
      models.push_back(c);
    }
  }
};

inline nlohmann::json to_json(const Window& w) {
  return {{"days", {w.first_day, w.end_day}}, {"regions", w.regions}};
}

inline Window window_from_json(const nlohmann::json& j, Window w) {
  if (auto it = j.find("days"); it != j.end()) {
    const auto d = it->get<std::vector<int>>();
    if (d.size() != 2) throw ConfigError("window 'days' must be [first, end)");
    w.first_day = d[0];
    w.end_day = d[1];
  }
  if (auto it = j.find("regions"); it != j.end()) w.regions = it->get<std::vector<std::string>>();
  return w;
}

inline nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : s.models) models.push_back(to_json(m));
  nlohmann::json j{{"train", to_json(s.train)},
                   {"test", to_json(s.test)},
                   {"models", models},
                   {"selector", s.selector},
                   {"eval", to_json(s.eval)},
                   {"resamples", s.resamples},
                   {"seed", s.seed},
                   {"features", {{"history_cap", s.features.history_cap}, {"tz_offset", s.features.tz_offset}}},
                   {"continuous_stream", s.continuous_stream},
                   {"test_numbers", s.test_numbers == TestNumbers::all ? "all" : "unseen"}};
  if (s.log) j["log"] = {{"records", s.log->records}, {"meta", s.log->meta}, {"labels", s.log->labels}};
  else j["generator"] = config_to_json(s.generator);
  return j;
}

inline void validate_spec(const ExperimentSpec& s) {
  if (s.resamples < 1) throw ConfigError("resamples must be >= 1");
  if (s.models.empty()) throw ConfigError("no models configured");
  for (const auto* w : {&s.train, &s.test})
    if (w->first_day < 0 || w->end_day <= w->first_day) throw ConfigError("window days must satisfy 0 <= first < end");
  s.eval.validate();
  FeatureSelector::parse(s.selector);
  if (s.features.history_cap < 1) throw ConfigError("history_cap must be >= 1");
  if (!s.log) validate_config(s.generator);
}

// Missing keys keep their defaults. The spec seed also seeds the generator.
inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  try {
    if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
    s.seed = j.value("seed", s.seed);
    if (auto it = j.find("generator"); it != j.end()) s.generator = config_from_json(*it);
    if (auto it = j.find("log"); it != j.end())
      s.log = LogSource{it->at("records").get<std::string>(), it->at("meta").get<std::string>(),
                        it->at("labels").get<std::string>()};
    if (auto it = j.find("train"); it != j.end()) s.train = window_from_json(*it, s.train);
    if (auto it = j.find("test"); it != j.end()) s.test = window_from_json(*it, s.test);
    if (auto it = j.find("models"); it != j.end()) {
      s.models.clear();
      for (const auto& m : *it) s.models.push_back(model_config_from_json(m));
    }
    s.selector = j.value("selector", s.selector);
    if (auto it = j.find("eval"); it != j.end()) s.eval = eval_config_from_json(*it);
    s.resamples = j.value("resamples", s.resamples);
    if (auto it = j.find("features"); it != j.end()) {
      s.features.history_cap = it->value("history_cap", s.features.history_cap);
      s.features.tz_offset = it->value("tz_offset", s.features.tz_offset);
    }
    s.continuous_stream = j.value("continuous_stream", s.continuous_stream);
    const auto tn = j.value("test_numbers", std::string("all"));
    if (tn == "all") s.test_numbers = TestNumbers::all;
    else if (tn == "unseen") s.test_numbers = TestNumbers::unseen;
    else throw ConfigError("test_numbers must be 'all' or 'unseen'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
  s.generator.seed = s.seed;
  validate_spec(s);
  return s;
}

// ---------------------------------------------------------------------------
// Data preparation

struct PreparedData {
  CallLog log;
  LabelTable labels;
  std::vector<Example> train;
  std::vector<Example> test;
  nlohmann::json summary;
};

namespace detail {

inline bool in_regions(const std::vector<std::string>& regions, const Province& p) {
  return regions.empty() || std::find(regions.begin(), regions.end(), p.view()) != regions.end();
}

inline std::set<std::string> region_set(const std::vector<std::string>& r) { return {r.begin(), r.end()}; }

inline std::vector<Example> select_window(const std::vector<Example>& all, const Window& w, std::int64_t start) {
  const std::int64_t lo = start + w.first_day * kSecondsPerDay, hi = start + w.end_day * kSecondsPerDay;
  std::vector<Example> out;
  for (const auto& e : all)
    if (e.call_date >= lo && e.call_date < hi && in_regions(w.regions, e.caller_province)) out.push_back(e);
  return out;
}

inline std::set<PhoneId> callers(const std::vector<Example>& xs, int malicious = -1) {
  std::set<PhoneId> out;
  for (const auto& e : xs)
    if (malicious < 0 || e.malicious == (malicious == 1)) out.insert(e.caller);
  return out;
}

}  // namespace detail

inline PreparedData prepare_data(const ExperimentSpec& spec) {
  validate_spec(spec);
  PreparedData d;
  if (spec.log) {
    d.log = load_log(spec.log->records, spec.log->meta);
    d.labels = labels_from_json(read_json_file(spec.log->labels));
  } else {
    auto g = generate_log(spec.generator);
    d.log = std::move(g.log);
    d.labels = std::move(g.labels);
  }
  const auto& meta = d.log.meta();
  for (const auto* w : {&spec.train, &spec.test})
    if (w->end_day > meta.days)
      throw ConfigError("window ends at day " + std::to_string(w->end_day) + " but the log covers " +
                        std::to_string(meta.days) + " days");

  const auto rtrain = detail::region_set(spec.train.regions), rtest = detail::region_set(spec.test.regions);
  bool disjoint_regions = !rtrain.empty() && !rtest.empty();
  for (const auto& r : rtrain)
    if (rtest.contains(r)) disjoint_regions = false;
  if (rtrain != rtest && !disjoint_regions)
    throw ConfigError("train and test regions must be identical or disjoint");

  const auto all = extract_all(d.log, d.labels, spec.features);
  d.train = detail::select_window(all, spec.train, meta.start_time);
  if (spec.continuous_stream) {
    d.test = detail::select_window(all, spec.test, meta.start_time);
  } else {
    // Restart the stream at the test window so no earlier record feeds the counters.
    const std::int64_t lo = meta.start_time + spec.test.first_day * kSecondsPerDay;
    std::vector<CallRecord> tail;
    for (const auto& r : d.log.records())
      if (r.call_date >= lo) tail.push_back(r);
    const CallLog sub(std::move(tail), meta);
    auto xs = extract_all(sub, d.labels, spec.features);
    d.test = detail::select_window(xs, spec.test, meta.start_time);
  }
  if (spec.test_numbers == TestNumbers::unseen) {
    const auto seen = detail::callers(d.train, 1);
    std::erase_if(d.test, [&](const Example& e) { return e.malicious && seen.contains(e.caller); });
  }

  const auto train_callers = detail::callers(d.train), test_callers = detail::callers(d.test);
  std::size_t shared = 0;
  for (const auto& c : test_callers) shared += train_callers.contains(c);
  if (disjoint_regions && shared != 0)
    throw ContractError("cross-region split shares " + std::to_string(shared) + " caller numbers");

  const auto train_mal = detail::callers(d.train, 1), test_mal = detail::callers(d.test, 1);
  if (train_mal.empty()) throw ContractError("infeasible spec: no malicious numbers in the training window");
  if (test_mal.empty()) throw ContractError("infeasible spec: no malicious numbers in the test window");
  if (detail::callers(d.train, 0).empty()) throw ContractError("infeasible spec: no benign numbers in the training window");
  if (detail::callers(d.test, 0).empty()) throw ContractError("infeasible spec: no benign numbers in the test window");

  auto count_mal = [](const std::vector<Example>& xs) {
    return static_cast<std::size_t>(std::count_if(xs.begin(), xs.end(), [](const Example& e) { return e.malicious; }));
  };
  d.summary = {{"log_records", d.log.size()},
               {"qualifying_examples", all.size()},
               {"train_examples", d.train.size()},
               {"train_malicious_examples", count_mal(d.train)},
               {"train_malicious_numbers", train_mal.size()},
               {"train_benign_numbers", train_callers.size() - train_mal.size()},
               {"test_examples", d.test.size()},
               {"test_malicious_examples", count_mal(d.test)},
               {"test_malicious_numbers", test_mal.size()},
               {"test_benign_numbers", test_callers.size() - test_mal.size()},
               {"shared_callers", shared},
               {"cross_region", disjoint_regions}};
  return d;
}

// ---------------------------------------------------------------------------
// Evaluation

// Encoded test rows: benign rows split into calibration and evaluation parts,
// malicious rows grouped per number in time order.
struct EvalSet {
  Dataset benign_calibration;
  Dataset benign_eval;
  Dataset malicious;
  std::vector<std::size_t> offsets;  // number k owns malicious rows [offsets[k], offsets[k+1])
  std::vector<PhoneId> numbers;
};

inline EvalSet build_eval_set(const std::vector<Example>& test, const FeatureSelector& selector, const EvalConfig& cfg,
                              std::uint64_t seed) {
  auto schema = std::make_shared<const Schema>(selector);
  EvalSet s{empty_dataset(schema), empty_dataset(schema), empty_dataset(schema), {0}, {}};
  std::vector<std::size_t> benign;
  std::map<PhoneId, std::vector<std::size_t>> by_number;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i].malicious) by_number[test[i].caller].push_back(i);
    else benign.push_back(i);
  }
  auto pool = benign;
  Rng rng(derive_seed(seed, 0xca11b));
  rng.shuffle(pool);
  const auto k = static_cast<std::size_t>(std::llround(cfg.calibration_fraction * static_cast<double>(pool.size())));
  std::vector<char> is_cal(test.size(), 0);
  for (std::size_t j = 0; j < k; ++j) is_cal[pool[j]] = 1;
  std::vector<double> buf(schema->width());
  for (auto i : benign) {
    encode_into(test[i].raw, *schema, buf);
    (is_cal[i] ? s.benign_calibration : s.benign_eval).add(buf, false, test[i].caller);
  }
  for (const auto& [num, idx] : by_number) {
    for (auto i : idx) {
      encode_into(test[i].raw, *schema, buf);
      s.malicious.add(buf, true, num);
    }
    s.numbers.push_back(num);
    s.offsets.push_back(s.malicious.rows());
  }
  if (s.benign_calibration.rows() == 0 || s.benign_eval.rows() == 0)
    throw ContractError("too few benign test records to split calibration and evaluation sets");
  return s;
}

struct Evaluation {
  EvalReport report;
  RocResult roc;
};

inline Evaluation evaluate_model(const TrainedModel& model, const EvalSet& es, const EvalConfig& cfg) {
  const auto cal = model.score_rows(es.benign_calibration);
  const auto ben = model.score_rows(es.benign_eval);
  const auto mal = model.score_rows(es.malicious);
  Evaluation ev;
  auto& r = ev.report;
  r.tau = tau_of_p(cal, cfg.p);
  r.calibration_pass_rate = pass_rate(cal, r.tau);
  r.eval_pass_rate = pass_rate(ben, r.tau);

  std::vector<double> scores(ben);
  scores.insert(scores.end(), mal.begin(), mal.end());
  std::vector<std::uint8_t> labels(ben.size(), 0);
  labels.resize(scores.size(), 1);
  ev.roc = roc_auc(scores, labels);
  r.auc = ev.roc.auc;

  std::vector<std::vector<double>> seqs;
  for (std::size_t k = 0; k + 1 < es.offsets.size(); ++k)
    seqs.emplace_back(mal.begin() + static_cast<std::ptrdiff_t>(es.offsets[k]),
                      mal.begin() + static_cast<std::ptrdiff_t>(es.offsets[k + 1]));
  for (int m : cfg.M) {
    r.afp[m] = afp(seqs, r.tau, m);
    r.reduction[m] = reduction_rate(r.afp[m], m);
    r.baseline_afp[m] = static_cast<double>(m + 1);
  }
  for (int n = 1; n <= cfg.mr_max_n; ++n) r.mr.push_back(mr_at(seqs, r.tau, n));
  r.malicious_numbers = seqs.size();
  r.malicious_records = mal.size();
  r.benign_eval_records = ben.size();
  r.benign_calibration_records = cal.size();
  return ev;
}

struct ModelRun {
  ModelConfig config;
  EvalReport mean;
  std::vector<EvalReport> resamples;
};

struct ExperimentResult {
  std::string selector;
  std::vector<ModelRun> runs;
  nlohmann::json data;
};

inline std::uint64_t sampling_seed(std::uint64_t seed, int r) { return derive_seed(seed, 0x100 + static_cast<std::uint64_t>(r)); }
inline std::uint64_t model_seed(std::uint64_t seed, int r) { return derive_seed(seed, 0x200 + static_cast<std::uint64_t>(r)); }

inline Dataset training_set(const PreparedData& d, const FeatureSelector& sel, std::uint64_t seed, int r) {
  return build_dataset(d.train, sel, Sampling::balanced(sampling_seed(seed, r)));
}

// Hook for persisting per-resample artifacts.
struct ArtifactSink {
  std::function<void(int, const Dataset&)> dataset;
  std::function<void(int, const TrainedModel&, const Evaluation&)> model;
};

inline ExperimentResult run_cell(const PreparedData& d, const ExperimentSpec& spec, const FeatureSelector& sel,
                                 const std::vector<ModelConfig>& models, const ArtifactSink& sink = {}) {
  const auto es = build_eval_set(d.test, sel, spec.eval, spec.seed);
  ExperimentResult res;
  res.selector = sel.name();
  res.data = d.summary;
  res.runs.resize(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) res.runs[m].config = models[m];
  for (int r = 0; r < spec.resamples; ++r) {
    const auto train = training_set(d, sel, spec.seed, r);
    if (train.schema->fingerprint() != es.malicious.schema->fingerprint())
      throw SchemaMismatch("training and test schemas differ");
    if (sink.dataset) sink.dataset(r, train);
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto model = train_model(train, models[m], model_seed(spec.seed, r));
      auto ev = evaluate_model(model, es, spec.eval);
      if (sink.model) sink.model(r, model, ev);
      res.runs[m].resamples.push_back(std::move(ev.report));
    }
  }
  for (auto& run : res.runs) run.mean = average_reports(run.resamples);
  return res;
}

// ---------------------------------------------------------------------------
// Tables and reports

inline nlohmann::json report_header(const std::string& command, const ExperimentSpec& spec) {
  return {{"tool", "malcall"}, {"version", kVersion}, {"command", command}, {"seed", spec.seed}, {"spec", to_json(spec)}};
}

inline nlohmann::json to_json(const ExperimentResult& res) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : res.runs) {
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : run.resamples) rs.push_back(to_json(r));
    runs.push_back({{"model", to_string(run.config.kind)},
                    {"config", to_json(run.config)},
                    {"mean", to_json(run.mean)},
                    {"resamples", rs}});
  }
  return {{"selector", res.selector}, {"data", res.data}, {"models", runs}};
}

inline Table summary_table(const ExperimentResult& res, const EvalConfig& cfg) {
  Table t{"summary", {"model", "selector", "auc", "tau"}, {}};
  for (int m : cfg.M) t.columns.push_back("afp_M" + std::to_string(m));
  for (int m : cfg.M) t.columns.push_back("reduction_M" + std::to_string(m));
  t.columns.push_back("eval_pass_rate");
  for (const auto& run : res.runs) {
    std::vector<nlohmann::json> row{std::string(to_string(run.config.kind)), res.selector, run.mean.auc,
                                    threshold_json(run.mean.tau)};
    for (int m : cfg.M) row.push_back(run.mean.afp.at(m));
    for (int m : cfg.M) row.push_back(run.mean.reduction.at(m));
    row.push_back(run.mean.eval_pass_rate);
    t.add(std::move(row));
  }
  return t;
}

inline Table mr_table(const ExperimentResult& res, const EvalConfig& cfg) {
  Table t{"mr", {"n"}, {}};
  for (const auto& run : res.runs) t.columns.emplace_back(to_string(run.config.kind));
  for (int n = 1; n <= cfg.mr_max_n; ++n) {
    std::vector<nlohmann::json> row{n};
    for (const auto& run : res.runs) row.push_back(run.mean.mr.at(static_cast<std::size_t>(n - 1)));
    t.add(std::move(row));
  }
  return t;
}

inline Table compare_baseline(const ExperimentResult& res, const std::vector<int>& Ms) {
  Table t{"baseline", {"model", "M", "model_afp", "baseline_afp", "model_reduction", "baseline_reduction"}, {}};
  for (const auto& run : res.runs)
    for (int m : Ms) {
      auto it = run.mean.afp.find(m);
      if (it == run.mean.afp.end()) throw ConfigError("M=" + std::to_string(m) + " was not evaluated");
      const double base = baseline_fp(std::vector<int>{0}, m);
      t.add({std::string(to_string(run.config.kind)), m, it->second, base, reduction_rate(it->second, m),
             reduction_rate(base, m)});
    }
  return t;
}

// Same table from a report.json written by an earlier run.
inline Table compare_baseline(const nlohmann::json& report) {
  try {
    const auto Ms = report.at("spec").at("eval").at("M").get<std::vector<int>>();
    Table t{"baseline", {"model", "M", "model_afp", "baseline_afp", "model_reduction", "baseline_reduction"}, {}};
    for (const auto& run : report.at("result").at("models"))
      for (int m : Ms) {
        const double a = run.at("mean").at("afp").at(std::to_string(m)).get<double>();
        const double base = m + 1.0;
        t.add({run.at("model"), m, a, base, reduction_rate(a, m), reduction_rate(base, m)});
      }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("not an evaluation report: ") + e.what());
  }
}

inline void write_experiment(const std::filesystem::path& out, const std::string& command, const ExperimentSpec& spec,
                             const ExperimentResult& res) {
  auto report = report_header(command, spec);
  report["result"] = to_json(res);
  write_json(out / "report.json", report);
  write_table(out, summary_table(res, spec.eval));
  write_table(out, mr_table(res, spec.eval));
}

inline std::string dataset_csv(const Dataset& d) {
  std::ostringstream s;
  write_csv(s, d);
  return s.str();
}

// Same-selector experiment over every configured model. With `out`, writes the
// report, tables, per-resample training sets, models and resample-0 ROC curves.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const PreparedData& d,
                                       const std::optional<std::filesystem::path>& out = {},
                                       const std::string& command = "evaluate") {
  const auto sel = FeatureSelector::parse(spec.selector);
  ArtifactSink sink;
  if (out) {
    sink.dataset = [&](int r, const Dataset& ds) {
      const auto base = *out / "datasets" / ("train_r" + std::to_string(r));
      write_text(base.string() + ".csv", dataset_csv(ds));
      auto manifest = dataset_manifest(ds, Sampling::balanced(sampling_seed(spec.seed, r)));
      manifest["seed"] = spec.seed;
      manifest["resample"] = r;
      write_json(base.string() + ".json", manifest);
    };
    sink.model = [&](int r, const TrainedModel& m, const Evaluation& ev) {
      const std::string name(to_string(m.kind()));
      write_text(*out / "models" / (name + "_r" + std::to_string(r) + ".json"), serialize_model(m) + "\n");
      if (r == 0) {
        std::ostringstream roc;
        write_roc_csv(roc, ev.roc);
        write_text(*out / ("roc_" + name + ".csv"), roc.str());
      }
    };
  }
  auto res = run_cell(d, spec, sel, spec.models, sink);
  if (out) {
    write_experiment(*out, command, spec, res);
    write_table(*out, compare_baseline(res, spec.eval.M));
  }
  return res;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec, const std::optional<std::filesystem::path>& out = {}) {
  const auto d = prepare_data(spec);
  return run_experiment(spec, d, out);
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationResult {
  std::vector<ExperimentResult> cells;  // one per selector, in table order
  Table auc;
  Table afp;
};

inline AblationResult ablation_suite(const ExperimentSpec& spec, const PreparedData& d) {
  AblationResult out;
  out.auc = {"ablation_auc", {"selector", "features", "width"}, {}};
  out.afp = {"ablation_afp", {"selector", "features", "width"}, {}};
  const int m0 = spec.eval.M.front();
  for (const auto& m : spec.models) {
    out.auc.columns.emplace_back(to_string(m.kind));
    out.afp.columns.push_back(std::string(to_string(m.kind)) + "_afp_M" + std::to_string(m0));
  }
  for (const auto& sel : {FeatureSelector::all(), FeatureSelector::no_historic(), FeatureSelector::no_crossref(),
                          FeatureSelector::basic()}) {
    auto res = run_cell(d, spec, sel, spec.models);
    const Schema schema(sel);
    std::vector<nlohmann::json> arow{sel.name(), sel.feature_count(), schema.width()}, frow = arow;
    for (const auto& run : res.runs) {
      arow.push_back(run.mean.auc);
      frow.push_back(run.mean.afp.at(m0));
    }
    out.auc.add(std::move(arow));
    out.afp.add(std::move(frow));
    out.cells.push_back(std::move(res));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature importance and top-10

struct ImportanceResult {
  std::vector<Feature> ranking;  // all 29 features, most used first
  std::vector<Feature> top10;
  std::size_t internal_nodes = 0;
  std::string tree_dump;  // first tree of the forest
  Table features;
  Table auc;
  ExperimentResult all;
  ExperimentResult top;
};

// Usage histogram of a forest trained on resample 0 with all features; the
// forest config comes from the spec's models when present.
inline ImportanceResult importance_and_top10(const ExperimentSpec& spec, const PreparedData& d) {
  ImportanceResult out;
  ModelConfig fcfg;
  fcfg.kind = ModelKind::forest;
  for (const auto& m : spec.models)
    if (m.kind == ModelKind::forest) fcfg = m;
  const auto train = training_set(d, FeatureSelector::all(), spec.seed, 0);
  const auto forest = train_model(train, fcfg, model_seed(spec.seed, 0));
  const auto usage = feature_usage_histogram(forest, true);
  out.internal_nodes = forest.ensemble().internal_count();
  out.tree_dump = dump_tree(forest, 0);
  const auto& schema = *forest.schema();
  const auto total = aggregate_by_feature(usage.total, schema);
  std::vector<std::map<int, std::size_t>> levels;
  for (const auto& l : usage.level) levels.push_back(aggregate_by_feature(l, schema));
  out.ranking = rank_features(total);
  out.top10.assign(out.ranking.begin(), out.ranking.begin() + 10);

  out.features = {"importance", {"rank", "feature", "total", "level1", "level2", "level3"}, {}};
  auto get = [](const std::map<int, std::size_t>& m, int f) {
    auto it = m.find(f);
    return it == m.end() ? std::size_t{0} : it->second;
  };
  for (std::size_t i = 0; i < out.ranking.size(); ++i) {
    const int f = static_cast<int>(index_of(out.ranking[i]));
    std::vector<nlohmann::json> row{i + 1, std::string(feature_name(out.ranking[i])), get(total, f)};
    for (std::size_t l = 0; l < 3; ++l) row.push_back(l < levels.size() ? get(levels[l], f) : 0);
    out.features.add(std::move(row));
  }

  out.all = run_cell(d, spec, FeatureSelector::all(), spec.models);
  out.top = run_cell(d, spec, FeatureSelector::top10(out.top10), spec.models);
  out.auc = {"top10_auc", {"model", "auc_all", "auc_top10", "delta"}, {}};
  for (std::size_t m = 0; m < spec.models.size(); ++m) {
    const double a = out.all.runs[m].mean.auc, t = out.top.runs[m].mean.auc;
    out.auc.add({std::string(to_string(spec.models[m].kind)), a, t, t - a});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Latency benchmark

struct BenchConfig {
  int iterations = 10000;
  int repetitions = 5;
  int max_history = 5;
  std::size_t pool = 256;
};

// Preloaded prediction inputs: current-call snapshot, pair count and the last
// max_history history snapshots.
struct BenchInput {
  RecordSnapshot current;
  std::uint32_t n_call = 0;
  std::vector<RecordSnapshot> history;
};

inline std::vector<BenchInput> collect_bench_inputs(const CallLog& log, const FeatureOptions& opt, std::size_t pool,
                                                    std::size_t max_history) {
  std::vector<BenchInput> out;
  CounterState state;
  std::unordered_map<PhoneId, std::vector<RecordSnapshot>, PhoneIdHash> hist;
  for (const auto& r : log.records()) {
    if (out.size() >= pool) break;
    if (log.is_mirror(r)) continue;
    const auto snap = snapshot_record(r, state, opt.tz_offset);
    if (r.call_type == CallType::incoming && !log.is_touchpal(r.other_phone)) {
      auto& h = hist[r.other_phone];
      if (h.size() >= max_history)
        out.push_back({snap, state.pair_count(r.caller(), r.callee()) + 1,
                       std::vector<RecordSnapshot>(h.end() - static_cast<std::ptrdiff_t>(max_history), h.end())});
    }
    state.update(r);
    if (!log.is_touchpal(r.other_phone)) hist[r.other_phone].push_back(snap);
  }
  if (out.empty()) throw ContractError("bench: no caller with enough history");
  return out;
}

struct LatencyStats {
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p99_us = 0.0;
};

inline LatencyStats latency_stats(std::vector<double> us) {
  std::sort(us.begin(), us.end());
  LatencyStats s;
  for (double v : us) s.mean_us += v;
  s.mean_us /= static_cast<double>(us.size());
  auto q = [&](double p) {
    const auto i = static_cast<std::size_t>(std::ceil(p * static_cast<double>(us.size()))) - 1;
    return us[std::min(i, us.size() - 1)];
  };
  s.p50_us = q(0.5);
  s.p99_us = q(0.99);
  return s;
}

// Wall time of feature assembly + encoding + scoring per prediction.
inline LatencyStats time_predictions(const TrainedModel& model, const std::vector<BenchInput>& inputs,
                                     std::size_t history_len, int iterations) {
  using clock = std::chrono::steady_clock;
  std::vector<double> buf(model.cols()), us;
  us.reserve(static_cast<std::size_t>(iterations));
  volatile double sink = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const auto& in = inputs[static_cast<std::size_t>(it) % inputs.size()];
    const auto t0 = clock::now();
    const std::span<const RecordSnapshot> h(in.history.data() + (in.history.size() - history_len), history_len);
    const auto raw = assemble_features(in.current, in.n_call, h);
    encode_into(raw, *model.schema(), buf);
    sink = sink + model.score(buf);
    const auto t1 = clock::now();
    us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  return latency_stats(std::move(us));
}

inline Table bench_latency(const std::vector<TrainedModel>& models, const std::vector<BenchInput>& inputs,
                           const BenchConfig& cfg) {
  if (cfg.iterations < 1 || cfg.repetitions < 1 || cfg.max_history < 1)
    throw ConfigError("bench: iterations, repetitions and max_history must be >= 1");
  Table t{"latency", {"model", "history_len", "mean_us", "p50_us", "p99_us"}, {}};
  for (const auto& m : models)
    for (int n = 1; n <= cfg.max_history; ++n) {
      LatencyStats avg;
      for (int rep = 0; rep < cfg.repetitions; ++rep) {
        const auto s = time_predictions(m, inputs, static_cast<std::size_t>(n), cfg.iterations);
        avg.mean_us += s.mean_us / cfg.repetitions;
        avg.p50_us += s.p50_us / cfg.repetitions;
        avg.p99_us += s.p99_us / cfg.repetitions;
      }
      t.add({std::string(to_string(m.kind())), n, avg.mean_us, avg.p50_us, avg.p99_us});
    }
  return t;
}

}  // namespace malcall
