// Command-line front end. `run` is the whole program minus process setup so
// tests can drive it in-process.

#ifndef REPS_CLI_HPP
#define REPS_CLI_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "reps/error.hpp"
#include "reps/evaluation.hpp"
#include "reps/geometry.hpp"
#include "reps/io.hpp"
#include "reps/models.hpp"

namespace reps::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Raised for flag combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ParseError("cannot open " + p.string() + " for writing");
  return os;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  auto os = open_out(p);
  os << j.dump(2) << '\n';
}

struct DatasetOptions {
  std::string dataset = "synthetic";
  std::size_t per_class = 50;
  std::size_t points = 512;
  std::uint64_t seed = 0;
};

/// Synthetic splits use disjoint seed streams; a directory supplies its own.
inline io::DirectoryDataset load_dataset(const DatasetOptions& o, const std::string& split) {
  if (o.dataset != "synthetic") return io::read_dataset_dir(o.dataset, split);
  io::DirectoryDataset d;
  for (std::size_t c = 0; c < kNumShapeClasses; ++c) d.class_names.emplace_back(shape_name(c));
  d.items = make_synthetic_dataset(o.per_class, o.points, mix_seed(o.seed, split == "train" ? 101 : 202));
  return d;
}

inline void add_dataset_flags(CLI::App* cmd, DatasetOptions& o, const char* per_class_help) {
  cmd->add_option("--dataset", o.dataset, "'synthetic' or a directory with <split>/<class>/ clouds")->required();
  cmd->add_option("--per-class", o.per_class, per_class_help)->check(CLI::PositiveNumber);
  cmd->add_option("--points", o.points, "points per synthetic cloud")->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string input, output, method, weights;
  std::optional<std::size_t> m, k;
  std::optional<double> ratio, voxel_size, alpha;
  std::uint64_t seed = 0;
  bool prefilter = false;
};

inline int run_sample(const SampleArgs& a, std::ostream& out) {
  if (a.method == "reps" && a.weights.empty()) throw UsageError("--method reps requires --weights");
  if (a.method != "voxel" && !a.m && !a.ratio) throw UsageError("one of --m or --ratio is required");
  if (a.method == "voxel" && !a.m && !a.ratio && !a.voxel_size)
    throw UsageError("--method voxel needs --voxel-size, --m or --ratio");

  const PointCloud cloud = io::read_cloud(a.input);
  std::size_t m = 0;
  if (a.m) m = *a.m;
  else if (a.ratio) m = std::max<std::size_t>(1, std::size_t(std::llround(double(cloud.size()) * *a.ratio)));

  SampleResult r;
  if (a.method == "random") {
    r = random_sample(cloud, m, a.seed);
  } else if (a.method == "fps") {
    r = fps_sampler().fn(cloud, m, a.seed);
  } else if (a.method == "voxel") {
    r = a.voxel_size ? voxel_sample(cloud, *a.voxel_size) : voxel_sample_to_m(cloud, m);
  } else {
    RepsSampler sampler = RepsSampler::load(a.weights);
    if (a.k && *a.k != sampler.k())
      throw UsageError("--k " + std::to_string(*a.k) + " does not match the trained K " + std::to_string(sampler.k()));
    RepsConfig cfg = sampler.config(a.seed, a.prefilter);
    if (a.alpha) cfg.alpha = *a.alpha;
    r = sampler.sample(cloud, m, cfg);
  }
  io::write_cloud(a.output, cloud.select(r.indices));
  out << "sampled " << r.m() << " of " << cloud.size() << " points -> " << a.output << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string input, output, weights;
  std::optional<std::size_t> k;
  std::optional<double> alpha;
  std::uint64_t seed = 0;
};

inline int run_score(const ScoreArgs& a, std::ostream& out) {
  const PointCloud cloud = io::read_cloud(a.input);
  RepsSampler sampler = RepsSampler::load(a.weights);
  if (a.k && *a.k != sampler.k())
    throw UsageError("--k " + std::to_string(*a.k) + " does not match the trained K " + std::to_string(sampler.k()));
  RepsConfig cfg = sampler.config(a.seed, false);
  if (a.alpha) cfg.alpha = *a.alpha;
  const ScoreTable t = sampler.scores(cloud, cfg);
  auto os = open_out(a.output);
  io::write_score_csv(os, cloud, t);
  out << "scored " << t.size() << " points -> " << a.output << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  DatasetOptions data;
  std::string out_weights, model = "reps", report;
  std::size_t epochs = 1, batch = 8, k = 16;
  double alpha = 0.8, lr = 1e-3;
};

inline int run_train(const TrainArgs& a, std::ostream& out) {
  const io::DirectoryDataset ds = load_dataset(a.data, "train");
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.lr = a.lr;
  tc.seed = a.data.seed;
  tc.alpha = a.alpha;
  tc.k = a.k;
  std::span<const LabeledCloud> items(ds.items);
  TrainReport report;
  if (a.model == "pointnet") {
    PointNetClassifier net(PointNetConfig{ds.class_names.size()}, mix_seed(a.data.seed, 1));
    report = train(items, net, tc);
    net.save(a.out_weights);
  } else {
    ClassifierConfig cc;
    cc.num_classes = ds.class_names.size();
    cc.k = a.k;
    cc.alpha = a.alpha;
    RepsClassifier net(cc, mix_seed(a.data.seed, 2));
    for (const auto& item : items)
      if (item.cloud.size() < net.min_points())
        throw InvalidArgument("train: clouds need at least " + std::to_string(net.min_points()) + " points for K=" +
                              std::to_string(a.k));
    report = train(items, net, tc);
    net.save(a.out_weights);
  }
  const std::string report_path = a.report.empty() ? a.out_weights + ".log.jsonl" : a.report;
  auto os = open_out(report_path);
  report.write_jsonl(os);
  const auto& last = report.epochs.back();
  out << "trained " << a.model << " for " << a.epochs << " epochs, final loss " << last.train_loss
      << ", accuracy " << last.val_accuracy << " -> " << a.out_weights << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  DatasetOptions data;
  std::string task_weights, sampler_weights, output, summary;
  std::vector<std::size_t> sizes{512, 256, 128, 64, 32};
  std::vector<std::string> samplers{"random", "fps", "voxel", "reps"};
};

inline int run_eval(const EvalArgs& a, std::ostream& out) {
  const bool wants_reps = std::find(a.samplers.begin(), a.samplers.end(), "reps") != a.samplers.end();
  if (wants_reps && a.sampler_weights.empty()) throw UsageError("the reps sampler requires --sampler-weights");
  const io::DirectoryDataset ds = load_dataset(a.data, "test");
  const PointNetClassifier task = PointNetClassifier::load(a.task_weights);
  if (task.config().num_classes != ds.class_names.size())
    throw InvalidArgument("eval: task network has " + std::to_string(task.config().num_classes) +
                          " classes, dataset has " + std::to_string(ds.class_names.size()));
  std::optional<RepsSampler> sampler;
  if (wants_reps) sampler = RepsSampler::load(a.sampler_weights);
  std::vector<NamedSampler> named;
  for (const auto& s : a.samplers) named.push_back(make_named_sampler(s, sampler ? &*sampler : nullptr));
  const auto rows = eval_samplers(ds.items, task, named, a.sizes, mix_seed(a.data.seed, 505));
  {
    auto os = open_out(a.output);
    write_eval_csv(os, rows);
  }
  write_json(a.summary.empty() ? a.output + ".json" : a.summary, eval_summary(rows));
  write_eval_csv(out, rows);
  return kOk;
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string input, output;
};

inline int run_convert(const ConvertArgs& a, std::ostream& out) {
  const PointCloud c = io::read_cloud(a.input);
  io::write_cloud(a.output, c);
  out << "converted " << c.size() << " points -> " << a.output << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string output;
  AblationConfig cfg;
};

inline int run_ablate(const AblateArgs& a, std::ostream& out) {
  const auto rows = run_ablation(a.cfg);
  auto os = open_out(a.output);
  write_ablation_csv(os, rows);
  write_ablation_csv(out, rows);
  return kOk;
}

}  // namespace detail

/// Parses `args` (without the program name) and runs one subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"REPS point-cloud sampling toolkit"};
  app.require_subcommand(1);

  detail::SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "downsample one cloud");
  sample->add_option("--input", sa.input, "input .xyz or .ply")->required();
  sample->add_option("--output", sa.output, "output .xyz or .ply")->required();
  sample->add_option("--method", sa.method)->required()->check(CLI::IsMember({"random", "fps", "voxel", "reps"}));
  sample->add_option("--m", sa.m, "number of points to keep")->check(CLI::PositiveNumber);
  sample->add_option("--ratio", sa.ratio, "fraction of points to keep")->check(CLI::Range(0.0, 1.0));
  sample->add_option("--voxel-size", sa.voxel_size)->check(CLI::PositiveNumber);
  sample->add_option("--alpha", sa.alpha, "point/shape score blend")->check(CLI::Range(0.0, 1.0));
  sample->add_option("--k", sa.k, "neighborhood size; must match the weights");
  sample->add_option("--seed", sa.seed);
  sample->add_option("--weights", sa.weights, "trained REPS classifier weights");
  sample->add_flag("--prefilter", sa.prefilter, "FPS to 2M before score-based selection");
  sample->get_option("--m")->excludes(sample->get_option("--ratio"));

  detail::ScoreArgs sc;
  auto* score = app.add_subcommand("score", "per-point importance scores as CSV");
  score->add_option("--input", sc.input)->required();
  score->add_option("--weights", sc.weights)->required();
  score->add_option("--output", sc.output)->required();
  score->add_option("--alpha", sc.alpha)->check(CLI::Range(0.0, 1.0));
  score->add_option("--k", sc.k);
  score->add_option("--seed", sc.seed);

  detail::TrainArgs ta;
  auto* trn = app.add_subcommand("train", "train a REPS classifier or a PointNet task network");
  detail::add_dataset_flags(trn, ta.data, "synthetic training clouds per class");
  trn->add_option("--out-weights", ta.out_weights)->required();
  trn->add_option("--epochs", ta.epochs)->required()->check(CLI::PositiveNumber);
  trn->add_option("--seed", ta.data.seed)->required();
  trn->add_option("--alpha", ta.alpha)->check(CLI::Range(0.0, 1.0));
  trn->add_option("--k", ta.k)->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
  trn->add_option("--lr", ta.lr)->check(CLI::NonNegativeNumber);
  trn->add_option("--batch", ta.batch)->check(CLI::PositiveNumber);
  trn->add_option("--model", ta.model)->check(CLI::IsMember({"reps", "pointnet"}));
  trn->add_option("--report", ta.report, "JSON-lines epoch log (default <out-weights>.log.jsonl)");

  detail::EvalArgs ea;
  auto* evl = app.add_subcommand("eval", "classification accuracy after downsampling");
  detail::add_dataset_flags(evl, ea.data, "synthetic test clouds per class");
  evl->add_option("--task-weights", ea.task_weights)->required();
  evl->add_option("--sampler-weights", ea.sampler_weights);
  evl->add_option("--sizes", ea.sizes)->delimiter(',');
  evl->add_option("--samplers", ea.samplers)->delimiter(',');
  evl->add_option("--output", ea.output)->required();
  evl->add_option("--summary", ea.summary, "JSON summary (default <output>.json)");
  evl->add_option("--seed", ea.data.seed);

  detail::ConvertArgs ca;
  auto* cnv = app.add_subcommand("convert", "convert between .xyz and .ply");
  cnv->add_option("--input", ca.input)->required();
  cnv->add_option("--output", ca.output)->required();

  detail::AblateArgs aa;
  auto* abl = app.add_subcommand("ablate", "K and alpha sweeps on the synthetic benchmark");
  auto& bc = aa.cfg.base;
  abl->add_option("--output", aa.output)->required();
  abl->add_option("--seed", bc.seed);
  abl->add_option("--train-per-class", bc.train_per_class);
  abl->add_option("--test-per-class", bc.test_per_class);
  abl->add_option("--points", bc.points);
  abl->add_option("--task-epochs", bc.task_epochs);
  abl->add_option("--sampler-per-class", bc.sampler_train_per_class);
  abl->add_option("--sampler-epochs", bc.sampler_epochs);
  abl->add_option("--sizes", bc.sizes)->delimiter(',');
  abl->add_option("--ks", aa.cfg.ks)->delimiter(',');
  abl->add_option("--alphas", aa.cfg.alphas)->delimiter(',');
  abl->add_option("--k", bc.classifier.k, "base K for the alpha sweep");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (sample->parsed()) return detail::run_sample(sa, out);
    if (score->parsed()) return detail::run_score(sc, out);
    if (trn->parsed()) return detail::run_train(ta, out);
    if (evl->parsed()) return detail::run_eval(ea, out);
    if (cnv->parsed()) return detail::run_convert(ca, out);
    if (abl->parsed()) return detail::run_ablate(aa, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidState& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const InvalidArgument& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace reps::cli

#endif  // REPS_CLI_HPP
