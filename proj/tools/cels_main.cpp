// Command-line driver: train the classifier, generate counterfactual
// explanations, evaluate them, sweep lambda, score plausibility, plot.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cels/dataset.hpp"
#include "cels/explain.hpp"
#include "cels/fcn.hpp"
#include "cels/metrics.hpp"
#include "cels/ood.hpp"
#include "cels/svg.hpp"
#include "cels/wcf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cels;

namespace {

constexpr int kRecordsSchemaVersion = 1;

// Config/data inconsistencies discovered after flag parsing; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Delimiter to_delim(const std::string& s) {
  if (s == "auto") return Delimiter::Auto;
  if (s == "tab") return Delimiter::Tab;
  if (s == "comma") return Delimiter::Comma;
  throw UsageError("unknown delimiter '" + s + "'");
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << content;
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open '" + path.string() + "'");
  return json::parse(f);
}

fs::path ensure_out_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("--out-dir is required");
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_run_config(const fs::path& out_dir, const std::string& command,
                      const json& options) {
  json j;
  j["schema_version"] = kRecordsSchemaVersion;
  j["command"] = command;
  j["config"] = options;
  write_text(out_dir / "run_config.json", j.dump(2) + "\n");
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string train_file, out_dir, dataset_name;
  std::string delimiter = "auto";
  bool z_normalize_flag = false;
  bool desk_scale = false;
  double learning_rate = 1e-3;
  int epochs = 500;
  int batch_size = 0;
  std::uint64_t seed = 0;
};

json echo(const TrainOpts& o) {
  return {{"train_file", o.train_file},       {"out_dir", o.out_dir},
          {"dataset_name", o.dataset_name},   {"delimiter", o.delimiter},
          {"z_normalize", o.z_normalize_flag}, {"desk_scale", o.desk_scale},
          {"learning_rate", o.learning_rate}, {"epochs", o.epochs},
          {"batch_size", o.batch_size},       {"seed", o.seed}};
}

void run_train(const TrainOpts& o) {
  auto ds = load_ucr(o.train_file, to_delim(o.delimiter), o.dataset_name);
  if (o.z_normalize_flag) ds = z_normalize(ds);

  TrainConfig cfg;
  cfg.learning_rate = o.learning_rate;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  cfg.desk_scale = o.desk_scale;
  const auto result = train(ds, cfg);

  const auto out = ensure_out_dir(o.out_dir);
  save_model(result.model, (out / "model.fcn").string());

  std::string log = "epoch,loss,accuracy\n";
  for (const auto& e : result.history)
    log += std::to_string(e.epoch) + "," + fmt_g(e.loss) + "," +
           fmt_g(e.accuracy) + "\n";
  write_text(out / "training_log.csv", log);

  json options = echo(o);
  options["dataset"] = ds.name;
  options["label_map"] = ds.label_map;
  options["architecture"] = result.model.describe();
  options["final_train_accuracy"] = result.final_accuracy;
  write_run_config(out, "train", options);

  std::cout << "trained " << result.model.describe() << "\n"
            << "train accuracy " << fmt_g(result.final_accuracy) << ", checkpoint "
            << (out / "model.fcn").string() << "\n";
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

struct ExplainOpts {
  std::string model, train_file, test_file, out_dir;
  std::string method = "info-cels";
  std::string delimiter = "auto";
  bool z_normalize_flag = false;
  double lambda = 1.0;
  double learning_rate = 0.1;
  int max_epochs = 1000;
  double threshold_k = 0.5;
  int patience = 100;
  double min_delta = 1e-6;
  double l1_weight = 0.1;
  std::uint64_t seed = 0;
  int max_test_samples = 100;
  int workers = 1;
};

json echo(const ExplainOpts& o) {
  return {{"model", o.model},
          {"train_file", o.train_file},
          {"test_file", o.test_file},
          {"out_dir", o.out_dir},
          {"method", o.method},
          {"delimiter", o.delimiter},
          {"z_normalize", o.z_normalize_flag},
          {"lambda", o.lambda},
          {"learning_rate", o.learning_rate},
          {"max_epochs", o.max_epochs},
          {"threshold_k", o.threshold_k},
          {"patience", o.patience},
          {"min_delta", o.min_delta},
          {"l1_weight", o.l1_weight},
          {"seed", o.seed},
          {"max_test_samples", o.max_test_samples},
          {"workers", o.workers}};
}

struct LoadedSplits {
  FcnModel model;
  LabeledDataset train_ds;
  LabeledDataset test_sub;                 // subsampled, train-aligned labels
  std::vector<std::size_t> source_index;   // rows in the full test file
};

LoadedSplits load_splits(const std::string& model_path,
                         const std::string& train_file,
                         const std::string& test_file, Delimiter delim,
                         bool znorm, int max_test, std::uint64_t seed) {
  LoadedSplits s;
  s.model = load_model(model_path);
  s.train_ds = load_ucr(train_file, delim);
  auto test_ds = relabel(load_ucr(test_file, delim), s.train_ds.label_map);
  if (znorm) {
    s.train_ds = z_normalize(s.train_ds);
    test_ds = z_normalize(test_ds);
  }
  if (s.train_ds.length != s.model.input_len)
    throw UsageError("train series length " + std::to_string(s.train_ds.length) +
                     " does not match model input length " +
                     std::to_string(s.model.input_len));
  if (test_ds.length != s.model.input_len)
    throw UsageError("test series length does not match the model");
  if (s.train_ds.num_classes != s.model.num_classes)
    throw UsageError("train class count does not match the model");

  const std::size_t want =
      max_test <= 0 ? test_ds.size() : static_cast<std::size_t>(max_test);
  s.source_index = subsample_indices(test_ds.size(), want, seed);
  LabeledDataset sub;
  sub.num_classes = test_ds.num_classes;
  sub.length = test_ds.length;
  sub.name = test_ds.name;
  sub.label_map = test_ds.label_map;
  for (const auto i : s.source_index) sub.series.push_back(test_ds.series[i]);
  s.test_sub = std::move(sub);
  return s;
}

std::vector<CounterfactualResult> dispatch_method(const ExplainOpts& o,
                                                  const LoadedSplits& s) {
  if (o.method == "cels" || o.method == "info-cels") {
    CelsConfig cfg;
    cfg.lambda = o.lambda;
    cfg.learning_rate = o.learning_rate;
    cfg.max_epochs = o.max_epochs;
    cfg.mode = o.method == "cels" ? ExplainMode::Cels : ExplainMode::InfoCels;
    cfg.threshold_k = o.threshold_k;
    cfg.patience = o.patience;
    cfg.min_delta = o.min_delta;
    cfg.seed = o.seed;
    return explain_many(s.model, s.test_sub, s.train_ds, cfg, o.workers);
  }
  WcfConfig cfg;
  cfg.learning_rate = o.learning_rate;
  cfg.max_epochs = o.max_epochs;
  cfg.l1_weight = o.l1_weight;
  cfg.patience = o.patience;
  cfg.min_delta = o.min_delta;
  cfg.seed = o.seed;
  return explain_wcf_many(s.model, s.test_sub, s.train_ds, cfg, o.workers);
}

void write_explain_artifacts(const fs::path& out, const ExplainOpts& o,
                             const LoadedSplits& s,
                             const std::vector<CounterfactualResult>& results) {
  // Counterfactuals as a UCR-style TSV, predicted label first.
  LabeledDataset cf_ds;
  cf_ds.num_classes = s.train_ds.num_classes;
  cf_ds.length = s.train_ds.length;
  cf_ds.label_map = s.train_ds.label_map;
  for (const auto& r : results) cf_ds.series.push_back(r.cf);
  save_ucr(cf_ds, (out / "counterfactuals.tsv").string());

  std::string sal;
  char buf[40];
  for (const auto& r : results) {
    for (std::size_t t = 0; t < r.saliency.theta.size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%.9g", r.saliency.theta[t]);
      if (t) sal += '\t';
      sal += buf;
    }
    sal += '\n';
  }
  write_text(out / "saliency.tsv", sal);

  json records = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    records.push_back({{"index", i},
                       {"source_index", s.source_index[i]},
                       {"original_class", r.original_class},
                       {"target_class", r.target_class},
                       {"target_probability", r.target_probability},
                       {"flipped", r.flipped},
                       {"epochs_run", r.epochs_run},
                       {"final_loss", r.final_loss},
                       {"nun_index", r.nun_index},
                       {"nun_distance", r.nun_distance},
                       {"method", r.method}});
  }
  json j;
  j["schema_version"] = kRecordsSchemaVersion;
  j["command"] = "explain";
  j["config"] = echo(o);
  j["dataset"] = s.test_sub.name;
  j["method"] = o.method;
  j["records"] = records;
  write_text(out / "records.json", j.dump(2) + "\n");
}

void run_explain(const ExplainOpts& o) {
  const auto s = load_splits(o.model, o.train_file, o.test_file,
                             to_delim(o.delimiter), o.z_normalize_flag,
                             o.max_test_samples, o.seed);
  const auto results = dispatch_method(o, s);
  const auto out = ensure_out_dir(o.out_dir);
  write_explain_artifacts(out, o, s, results);
  write_run_config(out, "explain", echo(o));

  int flips = 0;
  for (const auto& r : results) flips += r.flipped ? 1 : 0;
  std::cout << "explained " << results.size() << " instances with " << o.method
            << "; flip rate "
            << fmt_g(static_cast<double>(flips) / results.size()) << "\n";
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOpts {
  std::string explain_dir, test_file, out_dir;
  double epsilon = 0.01;
};

struct ExplainArtifacts {
  json meta;
  std::vector<CounterfactualResult> results;
  std::vector<TimeSeries> originals;
};

ExplainArtifacts read_explain_artifacts(const std::string& dir,
                                        const std::string& test_override) {
  ExplainArtifacts a;
  const fs::path d(dir);
  a.meta = read_json(d / "records.json");
  if (a.meta.at("schema_version").get<int>() != kRecordsSchemaVersion)
    throw UsageError("unsupported records schema_version in '" + dir + "'");
  const json& cfg = a.meta.at("config");

  const std::string test_file =
      !test_override.empty() ? test_override
                             : cfg.at("test_file").get<std::string>();
  const auto delim = to_delim(cfg.at("delimiter").get<std::string>());
  const bool znorm = cfg.at("z_normalize").get<bool>();

  const auto test_rows = load_series_rows(test_file, delim);
  const auto cf_rows = load_series_rows((d / "counterfactuals.tsv").string());

  const json& records = a.meta.at("records");
  if (cf_rows.size() != records.size())
    throw UsageError("counterfactuals.tsv and records.json disagree in '" +
                     dir + "'");

  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& rec = records[i];
    CounterfactualResult r;
    r.flipped = rec.at("flipped").get<bool>();
    r.target_probability = rec.at("target_probability").get<double>();
    r.original_class = rec.at("original_class").get<int>();
    r.target_class = rec.at("target_class").get<int>();
    r.epochs_run = rec.at("epochs_run").get<int>();
    r.final_loss = rec.at("final_loss").get<double>();
    r.nun_index = rec.at("nun_index").get<long long>();
    r.method = rec.at("method").get<std::string>();
    r.cf.values = cf_rows[i].values;
    a.results.push_back(std::move(r));

    const auto src = rec.at("source_index").get<std::size_t>();
    if (src >= test_rows.size())
      throw UsageError("source_index out of range; wrong --test-file?");
    TimeSeries x;
    x.values = znorm ? z_normalize(test_rows[src].values) : test_rows[src].values;
    a.originals.push_back(std::move(x));
  }
  return a;
}

std::string report_csv(const EvalReport& r, std::optional<double> lambda,
                       std::optional<OodRates> ood) {
  std::string head = "method,dataset,lambda,n,flip_rate,mean_target_probability,"
                     "mean_l1,mean_sparsity,mean_segments,epsilon";
  std::string row = r.method + "," + r.dataset + "," +
                    (lambda ? fmt_g(*lambda) : "") + "," + std::to_string(r.n) +
                    "," + fmt_g(r.flip_rate) + "," +
                    fmt_g(r.mean_target_probability) + "," + fmt_g(r.mean_l1) +
                    "," + fmt_g(r.mean_sparsity) + "," + fmt_g(r.mean_segments) +
                    "," + fmt_g(r.epsilon);
  if (ood) {
    head += ",if_rate,lof_rate";
    row += "," + fmt_g(ood->if_rate) + "," + fmt_g(ood->lof_rate);
  }
  return head + "\n" + row + "\n";
}

void run_evaluate(const EvaluateOpts& o) {
  const auto a = read_explain_artifacts(o.explain_dir, o.test_file);
  const std::string method = a.meta.at("method").get<std::string>();
  const std::string dataset = a.meta.at("dataset").get<std::string>();
  const auto rep = evaluate(a.results, a.originals, o.epsilon, method, dataset);

  const auto out = ensure_out_dir(o.out_dir);
  json j = json::parse(report_to_json(rep));
  j["config"] = {{"explain_dir", o.explain_dir},
                 {"test_file", o.test_file},
                 {"epsilon", o.epsilon},
                 {"out_dir", o.out_dir}};
  j["explain_config"] = a.meta.at("config");
  write_text(out / "report.json", j.dump(2) + "\n");

  std::optional<double> lambda;
  if (method != "wcf")
    lambda = a.meta.at("config").at("lambda").get<double>();
  write_text(out / "report.csv", report_csv(rep, lambda, std::nullopt));
  write_run_config(out, "evaluate",
                   {{"explain_dir", o.explain_dir},
                    {"test_file", o.test_file},
                    {"epsilon", o.epsilon},
                    {"out_dir", o.out_dir}});

  std::cout << "evaluated " << rep.n << " instances: flip rate "
            << fmt_g(rep.flip_rate) << ", mean target probability "
            << fmt_g(rep.mean_target_probability) << ", mean L1 "
            << fmt_g(rep.mean_l1) << "\n";
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepOpts {
  ExplainOpts base;  // model/files/optimizer settings; method is forced
  std::string lambdas = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  double epsilon = 0.01;
  int num_trees = 100;
  int psi = 256;
  double contamination = 0.05;
  std::uint64_t detector_seed = 0;
  int lof_k = 20;
};

std::vector<double> parse_lambdas(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(',', start);
    const std::string tok = text.substr(start, pos - start);
    if (!tok.empty()) {
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw UsageError("bad lambda value '" + tok + "'");
      }
    }
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (out.empty()) throw UsageError("--lambdas is empty");
  return out;
}

void run_sweep(const SweepOpts& o) {
  const auto s = load_splits(o.base.model, o.base.train_file, o.base.test_file,
                             to_delim(o.base.delimiter),
                             o.base.z_normalize_flag, o.base.max_test_samples,
                             o.base.seed);
  const auto lambdas = parse_lambdas(o.lambdas);

  CelsConfig cfg;
  cfg.learning_rate = o.base.learning_rate;
  cfg.max_epochs = o.base.max_epochs;
  cfg.patience = o.base.patience;
  cfg.min_delta = o.base.min_delta;
  cfg.seed = o.base.seed;

  SweepOptions opts;
  opts.iforest.num_trees = o.num_trees;
  opts.iforest.subsample = o.psi;
  opts.iforest.contamination = o.contamination;
  opts.iforest.seed = o.detector_seed;
  opts.lof_k = o.lof_k;
  opts.epsilon = o.epsilon;
  opts.workers = o.base.workers;

  const auto points = lambda_sweep(s.model, s.test_sub, s.train_ds, lambdas,
                                   cfg, opts);

  const auto out = ensure_out_dir(o.base.out_dir);
  json options = echo(o.base);
  options["lambdas"] = lambdas;
  options["epsilon"] = o.epsilon;
  options["num_trees"] = o.num_trees;
  options["psi"] = o.psi;
  options["contamination"] = o.contamination;
  options["detector_seed"] = o.detector_seed;
  options["lof_k"] = o.lof_k;

  json jpoints = json::array();
  std::string csv =
      "lambda,n,flip_rate,mean_target_probability,mean_l1,mean_sparsity,"
      "mean_segments,epsilon,if_rate,lof_rate\n";
  for (const auto& p : points) {
    jpoints.push_back({{"lambda", p.lambda},
                       {"report", json::parse(report_to_json(p.report))},
                       {"if_rate", p.ood.if_rate},
                       {"lof_rate", p.ood.lof_rate}});
    csv += fmt_g(p.lambda) + "," + std::to_string(p.report.n) + "," +
           fmt_g(p.report.flip_rate) + "," +
           fmt_g(p.report.mean_target_probability) + "," +
           fmt_g(p.report.mean_l1) + "," + fmt_g(p.report.mean_sparsity) + "," +
           fmt_g(p.report.mean_segments) + "," + fmt_g(p.report.epsilon) + "," +
           fmt_g(p.ood.if_rate) + "," + fmt_g(p.ood.lof_rate) + "\n";
  }
  json j;
  j["schema_version"] = kRecordsSchemaVersion;
  j["command"] = "sweep";
  j["config"] = options;
  j["dataset"] = s.test_sub.name;
  j["points"] = jpoints;
  write_text(out / "sweep.json", j.dump(2) + "\n");
  write_text(out / "sweep.csv", csv);

  // Fig. 4 analogs: bounded metrics and the L1 distance.
  std::vector<double> xs;
  SvgSeries flip{"flip rate", {}, {}, "#1f77b4"},
      tprob{"target probability", {}, {}, "#d62728"},
      spars{"sparsity", {}, {}, "#2ca02c"}, ifr{"IF ood rate", {}, {}, "#9467bd"},
      lofr{"LOF ood rate", {}, {}, "#8c564b"}, l1{"mean L1", {}, {}, "#d62728"};
  for (const auto& p : points) {
    flip.x.push_back(p.lambda);
    flip.y.push_back(p.report.flip_rate);
    tprob.x.push_back(p.lambda);
    tprob.y.push_back(p.report.mean_target_probability);
    spars.x.push_back(p.lambda);
    spars.y.push_back(p.report.mean_sparsity);
    ifr.x.push_back(p.lambda);
    ifr.y.push_back(p.ood.if_rate);
    lofr.x.push_back(p.lambda);
    lofr.y.push_back(p.ood.lof_rate);
    l1.x.push_back(p.lambda);
    l1.y.push_back(p.report.mean_l1);
  }
  write_text(out / "sweep.svg",
             line_chart_svg("lambda sensitivity (" + s.test_sub.name + ")",
                            "lambda", {flip, tprob, spars, ifr, lofr}));
  write_text(out / "sweep_l1.svg",
             line_chart_svg("lambda vs mean L1 (" + s.test_sub.name + ")",
                            "lambda", {l1}));
  write_run_config(out, "sweep", options);

  std::cout << "swept " << points.size() << " lambda values on "
            << s.test_sub.size() << " instances\n";
}

// ---------------------------------------------------------------------------
// ood
// ---------------------------------------------------------------------------

struct OodOpts {
  std::string train_file, out_dir;
  std::vector<std::string> cf_dirs;
  std::string delimiter = "auto";
  bool z_normalize_flag = false;
  bool per_class = false;
  int num_trees = 100;
  int psi = 256;
  double contamination = 0.05;
  std::uint64_t detector_seed = 0;
  int lof_k = 20;
};

void run_ood(const OodOpts& o) {
  auto train_ds = load_ucr(o.train_file, to_delim(o.delimiter));
  if (o.z_normalize_flag) train_ds = z_normalize(train_ds);
  const auto train_points = to_points(train_ds);

  IsoForestParams if_params;
  if_params.num_trees = o.num_trees;
  if_params.subsample = o.psi;
  if_params.contamination = o.contamination;
  if_params.seed = o.detector_seed;

  // Per-class mode fits detectors on the counterfactual class's training
  // members only; default mode uses the whole training set.
  std::map<int, IsolationForest> if_by_class;
  std::map<int, Lof> lof_by_class;
  std::optional<IsolationForest> if_global;
  std::optional<Lof> lof_global;
  if (!o.per_class) {
    if_global = IsolationForest::fit(train_points, if_params);
    lof_global = Lof::fit(train_points, o.lof_k);
  }

  auto class_detectors = [&](int cls) -> std::pair<const IsolationForest&, const Lof&> {
    if (!o.per_class) return {*if_global, *lof_global};
    if (!if_by_class.count(cls)) {
      std::vector<std::vector<double>> pts;
      for (const auto& ts : train_ds.series)
        if (ts.label && *ts.label == cls) pts.push_back(ts.values);
      if (pts.size() < 2)
        throw UsageError("class " + std::to_string(cls) +
                         " has fewer than 2 training members");
      if_by_class.emplace(cls, IsolationForest::fit(pts, if_params));
      lof_by_class.emplace(cls, Lof::fit(pts, o.lof_k));
    }
    return {if_by_class.at(cls), lof_by_class.at(cls)};
  };

  json methods = json::array();
  std::string csv = "method,if_rate,lof_rate\n";
  for (const auto& dir : o.cf_dirs) {
    const auto a = read_explain_artifacts(dir, "");
    const std::string method = a.meta.at("method").get<std::string>();

    int if_flags = 0, lof_flags = 0;
    for (const auto& r : a.results) {
      const auto [fi, fl] = class_detectors(o.per_class ? r.target_class : 0);
      if (fi.is_outlier(r.cf.values)) ++if_flags;
      if (fl.is_outlier(r.cf.values)) ++lof_flags;
    }
    const double n = static_cast<double>(a.results.size());
    const double if_rate_v = if_flags / n;
    const double lof_rate_v = lof_flags / n;
    methods.push_back({{"method", method},
                       {"cf_dir", dir},
                       {"n", a.results.size()},
                       {"if_rate", if_rate_v},
                       {"lof_rate", lof_rate_v}});
    csv += method + "," + fmt_g(if_rate_v) + "," + fmt_g(lof_rate_v) + "\n";
  }

  const auto out = ensure_out_dir(o.out_dir);
  json options = {{"train_file", o.train_file},
                  {"cf_dirs", o.cf_dirs},
                  {"delimiter", o.delimiter},
                  {"z_normalize", o.z_normalize_flag},
                  {"per_class", o.per_class},
                  {"num_trees", o.num_trees},
                  {"psi", o.psi},
                  {"contamination", o.contamination},
                  {"detector_seed", o.detector_seed},
                  {"lof_k", o.lof_k},
                  {"out_dir", o.out_dir}};
  json j;
  j["schema_version"] = kRecordsSchemaVersion;
  j["command"] = "ood";
  j["config"] = options;
  j["methods"] = methods;
  write_text(out / "ood_report.json", j.dump(2) + "\n");
  write_text(out / "ood_report.csv", csv);
  write_run_config(out, "ood", options);

  std::cout << "scored " << o.cf_dirs.size() << " counterfactual set(s)\n"
            << csv;
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

struct PlotOpts {
  std::string sweep_json, explain_dir, test_file, train_file, out_dir;
  int index = 0;
};

std::vector<std::vector<double>> load_saliency_rows(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (start <= line.size()) {
      const auto pos = line.find('\t', start);
      row.push_back(std::stod(line.substr(start, pos - start)));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void run_plot(const PlotOpts& o) {
  if (o.sweep_json.empty() && o.explain_dir.empty())
    throw UsageError("plot needs --sweep-json and/or --explain-dir");
  const auto out = ensure_out_dir(o.out_dir);

  if (!o.sweep_json.empty()) {
    const json j = read_json(o.sweep_json);
    SvgSeries flip{"flip rate", {}, {}, "#1f77b4"},
        tprob{"target probability", {}, {}, "#d62728"},
        spars{"sparsity", {}, {}, "#2ca02c"}, l1{"mean L1", {}, {}, "#d62728"};
    for (const auto& p : j.at("points")) {
      const double lambda = p.at("lambda").get<double>();
      const json& rep = p.at("report");
      flip.x.push_back(lambda);
      flip.y.push_back(rep.at("flip_rate").get<double>());
      tprob.x.push_back(lambda);
      tprob.y.push_back(rep.at("mean_target_probability").get<double>());
      spars.x.push_back(lambda);
      spars.y.push_back(rep.at("mean_sparsity").get<double>());
      l1.x.push_back(lambda);
      l1.y.push_back(rep.at("mean_l1").get<double>());
    }
    write_text(out / "sweep.svg",
               line_chart_svg("lambda sensitivity", "lambda",
                              {flip, tprob, spars}));
    write_text(out / "sweep_l1.svg",
               line_chart_svg("lambda vs mean L1", "lambda", {l1}));
  }

  if (!o.explain_dir.empty()) {
    const fs::path d(o.explain_dir);
    const json meta = read_json(d / "records.json");
    const json& cfg = meta.at("config");
    const json& records = meta.at("records");
    if (o.index < 0 || o.index >= static_cast<int>(records.size()))
      throw UsageError("--index out of range");
    const json& rec = records[o.index];

    const auto delim = to_delim(cfg.at("delimiter").get<std::string>());
    const bool znorm = cfg.at("z_normalize").get<bool>();
    const std::string test_file =
        !o.test_file.empty() ? o.test_file : cfg.at("test_file").get<std::string>();
    const std::string train_file = !o.train_file.empty()
                                       ? o.train_file
                                       : cfg.at("train_file").get<std::string>();

    const auto test_rows = load_series_rows(test_file, delim);
    const auto cf_rows = load_series_rows((d / "counterfactuals.tsv").string());
    const auto sal_rows = load_saliency_rows(d / "saliency.tsv");
    const auto src = rec.at("source_index").get<std::size_t>();
    if (src >= test_rows.size()) throw UsageError("source_index out of range");

    std::vector<double> x = test_rows[src].values;
    if (znorm) x = z_normalize(x);
    std::vector<double> nun;
    const long long nun_index = rec.at("nun_index").get<long long>();
    if (nun_index >= 0) {
      const auto train_rows = load_series_rows(train_file, delim);
      if (nun_index >= static_cast<long long>(train_rows.size()))
        throw UsageError("nun_index out of range; wrong --train-file?");
      nun = train_rows[static_cast<std::size_t>(nun_index)].values;
      if (znorm) nun = z_normalize(nun);
    }

    const std::string title =
        meta.at("method").get<std::string>() + " instance " +
        std::to_string(o.index) + ": class " +
        std::to_string(rec.at("original_class").get<int>()) + " -> " +
        std::to_string(rec.at("target_class").get<int>()) + " (p=" +
        fmt_g(rec.at("target_probability").get<double>()) + ")";
    write_text(out / ("instance_" + std::to_string(o.index) + ".svg"),
               instance_plot_svg(x, nun, cf_rows[o.index].values,
                                 sal_rows[o.index], title));
  }
  std::cout << "wrote plots to " << out.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual explanations for time series classifiers"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Config file (INI format; command-line flags take precedence)");

  TrainOpts train_opts;
  ExplainOpts explain_opts;
  EvaluateOpts eval_opts;
  SweepOpts sweep_opts;
  OodOpts ood_opts;
  PlotOpts plot_opts;
  int rc = 0;

  auto guarded = [&rc](auto&& fn) {
    try {
      fn();
      rc = 0;
    } catch (const UsageError& e) {
      std::cerr << "error: " << e.what() << "\n";
      rc = 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      rc = 1;
    }
  };

  const auto add_data_flags = [](CLI::App* cmd, std::string& delim, bool& znorm) {
    cmd->add_option("--delimiter", delim, "auto|tab|comma")
        ->check(CLI::IsMember({"auto", "tab", "comma"}));
    cmd->add_flag("--z-normalize", znorm, "z-normalize each series after loading");
  };

  // train
  auto* t = app.add_subcommand("train", "Train the FCN classifier");
  t->add_option("--train-file", train_opts.train_file, "UCR train split")
      ->required()
      ->check(CLI::ExistingFile);
  t->add_option("--out-dir", train_opts.out_dir, "output directory")->required();
  t->add_option("--dataset-name", train_opts.dataset_name, "dataset name");
  add_data_flags(t, train_opts.delimiter, train_opts.z_normalize_flag);
  t->add_flag("--desk-scale", train_opts.desk_scale,
              "small filters, no batch norm");
  t->add_option("--learning-rate", train_opts.learning_rate, "ADAM step size");
  t->add_option("--epochs", train_opts.epochs, "training epochs");
  t->add_option("--batch-size", train_opts.batch_size, "0 = full batch");
  t->add_option("--seed", train_opts.seed, "RNG seed");
  t->callback([&] { guarded([&] { run_train(train_opts); }); });

  // explain
  auto* e = app.add_subcommand("explain", "Generate counterfactuals");
  e->add_option("--model", explain_opts.model, "FCN checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  e->add_option("--train-file", explain_opts.train_file, "background dataset")
      ->required()
      ->check(CLI::ExistingFile);
  e->add_option("--test-file", explain_opts.test_file, "instances to explain")
      ->required()
      ->check(CLI::ExistingFile);
  e->add_option("--out-dir", explain_opts.out_dir, "output directory")->required();
  e->add_option("--method", explain_opts.method, "cels|info-cels|wcf")
      ->check(CLI::IsMember({"cels", "info-cels", "wcf"}));
  add_data_flags(e, explain_opts.delimiter, explain_opts.z_normalize_flag);
  e->add_option("--lambda", explain_opts.lambda, "weight of the L_Max term");
  e->add_option("--learning-rate", explain_opts.learning_rate, "ADAM step size");
  e->add_option("--max-epochs", explain_opts.max_epochs, "optimization epochs");
  e->add_option("--threshold-k", explain_opts.threshold_k,
                "saliency threshold (cels mode)");
  e->add_option("--patience", explain_opts.patience, "early-stop patience");
  e->add_option("--min-delta", explain_opts.min_delta, "early-stop min delta");
  e->add_option("--l1-weight", explain_opts.l1_weight, "wcf L1 weight");
  e->add_option("--seed", explain_opts.seed, "base RNG seed");
  e->add_option("--max-test-samples", explain_opts.max_test_samples,
                "subsample size; 0 = all");
  e->add_option("--workers", explain_opts.workers, "parallel workers");
  e->callback([&] { guarded([&] { run_explain(explain_opts); }); });

  // evaluate
  auto* v = app.add_subcommand("evaluate", "Metrics over explain output");
  v->add_option("--explain-dir", eval_opts.explain_dir, "explain output dir")
      ->required()
      ->check(CLI::ExistingDirectory);
  v->add_option("--test-file", eval_opts.test_file,
                "override the test file recorded in the explain config")
      ->check(CLI::ExistingFile);
  v->add_option("--epsilon", eval_opts.epsilon, "changed-point tolerance");
  v->add_option("--out-dir", eval_opts.out_dir, "output directory")->required();
  v->callback([&] { guarded([&] { run_evaluate(eval_opts); }); });

  // sweep
  auto* w = app.add_subcommand("sweep", "Info-CELS lambda sensitivity sweep");
  w->add_option("--model", sweep_opts.base.model, "FCN checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  w->add_option("--train-file", sweep_opts.base.train_file, "background dataset")
      ->required()
      ->check(CLI::ExistingFile);
  w->add_option("--test-file", sweep_opts.base.test_file, "instances to explain")
      ->required()
      ->check(CLI::ExistingFile);
  w->add_option("--out-dir", sweep_opts.base.out_dir, "output directory")
      ->required();
  add_data_flags(w, sweep_opts.base.delimiter, sweep_opts.base.z_normalize_flag);
  w->add_option("--lambdas", sweep_opts.lambdas, "comma-separated grid");
  w->add_option("--learning-rate", sweep_opts.base.learning_rate, "ADAM step");
  w->add_option("--max-epochs", sweep_opts.base.max_epochs, "optimization epochs");
  w->add_option("--patience", sweep_opts.base.patience, "early-stop patience");
  w->add_option("--min-delta", sweep_opts.base.min_delta, "early-stop min delta");
  w->add_option("--seed", sweep_opts.base.seed, "base RNG seed");
  w->add_option("--max-test-samples", sweep_opts.base.max_test_samples,
                "subsample size; 0 = all");
  w->add_option("--workers", sweep_opts.base.workers, "parallel workers");
  w->add_option("--epsilon", sweep_opts.epsilon, "changed-point tolerance");
  w->add_option("--num-trees", sweep_opts.num_trees, "isolation forest trees");
  w->add_option("--psi", sweep_opts.psi, "isolation forest subsample");
  w->add_option("--contamination", sweep_opts.contamination,
                "isolation forest contamination");
  w->add_option("--detector-seed", sweep_opts.detector_seed, "detector seed");
  w->add_option("--lof-k", sweep_opts.lof_k, "LOF neighbor count");
  w->callback([&] { guarded([&] { run_sweep(sweep_opts); }); });

  // ood
  auto* d = app.add_subcommand("ood", "Plausibility via IF and LOF");
  d->add_option("--train-file", ood_opts.train_file, "training dataset")
      ->required()
      ->check(CLI::ExistingFile);
  d->add_option("--cf-dir", ood_opts.cf_dirs,
                "explain output dir (repeatable, one per method)")
      ->required()
      ->check(CLI::ExistingDirectory);
  d->add_option("--out-dir", ood_opts.out_dir, "output directory")->required();
  add_data_flags(d, ood_opts.delimiter, ood_opts.z_normalize_flag);
  d->add_flag("--per-class", ood_opts.per_class,
              "fit detectors on counterfactual-class members only");
  d->add_option("--num-trees", ood_opts.num_trees, "isolation forest trees");
  d->add_option("--psi", ood_opts.psi, "isolation forest subsample");
  d->add_option("--contamination", ood_opts.contamination,
                "isolation forest contamination");
  d->add_option("--detector-seed", ood_opts.detector_seed, "detector seed");
  d->add_option("--lof-k", ood_opts.lof_k, "LOF neighbor count");
  d->callback([&] { guarded([&] { run_ood(ood_opts); }); });

  // plot
  auto* p = app.add_subcommand("plot", "SVG charts from prior outputs");
  p->add_option("--sweep-json", plot_opts.sweep_json, "sweep.json to chart")
      ->check(CLI::ExistingFile);
  p->add_option("--explain-dir", plot_opts.explain_dir,
                "explain output dir for an instance plot")
      ->check(CLI::ExistingDirectory);
  p->add_option("--index", plot_opts.index, "instance index within the dir");
  p->add_option("--test-file", plot_opts.test_file, "override recorded test file")
      ->check(CLI::ExistingFile);
  p->add_option("--train-file", plot_opts.train_file,
                "override recorded train file")
      ->check(CLI::ExistingFile);
  p->add_option("--out-dir", plot_opts.out_dir, "output directory")->required();
  p->callback([&] { guarded([&] { run_plot(plot_opts); }); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return rc;
}
