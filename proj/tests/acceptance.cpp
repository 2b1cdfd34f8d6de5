// End-to-end acceptance run. Prints one line per criterion and exits nonzero
// if any asserted criterion fails. The benchmark trains three full pipelines,
// so expect a runtime of roughly a quarter hour on one core.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "reps/reps.hpp"

using namespace reps;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id;
  std::string title;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, const std::string& title, bool pass, const std::string& detail) {
  verdicts.push_back({id, title, pass, detail});
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << id << ". " << title << ": " << detail << std::endl;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Matrix uniform(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// -----------------------------------------------------------------------------
// 1. Gradient checks on every differentiable composite
// -----------------------------------------------------------------------------

void gradient_correctness() {
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  std::map<std::string, int> failures, runs;
  std::size_t kinks = 0;
  auto record = [&](const std::string& name, const ad::GradientCheckReport& r) {
    worst[name] = std::max(worst[name], r.max_relative_error);
    failures[name] += !r.passed;
    ++runs[name];
    kinks += r.kinks;
  };
  ad::GradientCheckOptions o;  // eps 1e-5, tol 1e-4
  o.resolve_kinks = true;

  for (int trial = 0; trial < 10; ++trial) {
    std::mt19937_64 rng(1000 + std::uint64_t(trial));
    const PointCloud cloud(uniform(24, 3, rng));
    const Matrix feats = uniform(24, 3, rng);
    ReconNets nets = make_recon_nets("r", 3, 4, rng, 8);
    std::vector<ad::Parameter*> ps;
    nets.collect(ps);
    const auto neighbors = knn_all(cloud, 4, {.include_self = false});
    const auto patches = partition_patches(cloud, 6, 4, std::uint64_t(trial));
    auto point_fn = [&](ad::Tape& t, const ad::Tensor& x) {
      return ad::sum(point_loss(t, cloud.coords(), neighbors,
                                reconstruct_points(t, cloud.coords(), x, neighbors, nets.point)));
    };
    auto shape_fn = [&](ad::Tape& t, const ad::Tensor& x) {
      return ad::sum(shape_loss(t, cloud.coords(), patches,
                                reconstruct_shapes(t, cloud.coords(), x, patches, nets.shape)));
    };
    record("point_loss", ad::gradient_check_parameters([&](ad::Tape& t) { return point_fn(t, t.constant(feats)); },
                                                       ps, o));
    record("point_loss", ad::gradient_check(point_fn, feats, o));
    record("shape_loss", ad::gradient_check_parameters([&](ad::Tape& t) { return shape_fn(t, t.constant(feats)); },
                                                       ps, o));
    record("shape_loss", ad::gradient_check(shape_fn, feats, o));

    GlfaParams glfa = make_glfa("g", 3, 6, 4, rng);
    std::vector<ad::Parameter*> gp;
    glfa.collect(gp);
    const SampleResult sel = farthest_point_sample(cloud, 6, 0);
    auto glfa_fn = [&](ad::Tape& t, const ad::Tensor& x) {
      return ad::sum(ad::l2_norm_rows(glfa_forward(t, cloud, x, sel, 4, glfa)));
    };
    record("glfa", ad::gradient_check_parameters([&](ad::Tape& t) { return glfa_fn(t, t.constant(feats)); }, gp, o));
    record("glfa", ad::gradient_check(glfa_fn, feats, o));

    ClassifierConfig cc;
    cc.embed_width = 6;
    cc.stage_widths = {6, 6};
    cc.glfa_hidden = cc.recon_hidden = cc.head_hidden = 6;
    cc.k = 4;
    RepsClassifier model(cc, 2000 + std::uint64_t(trial));
    const LabeledCloud item{make_shape(std::size_t(trial) % 4, 24, rng), std::size_t(trial) % 4};
    ad::GradientCheckOptions co = o;
    co.max_coords = 6;
    co.seed = std::uint64_t(trial);
    record("classifier", ad::gradient_check_parameters([&](ad::Tape& t) { return model.loss(t, item, 5, 1.0).total; },
                                                       model.parameters(), co));
  }
  const double secs = seconds_since(t0);
  bool ok = secs < 120;
  std::string detail;
  for (const auto& [name, err] : worst) {
    ok = ok && failures[name] == 0;
    detail += name + " max rel err " + fmt("%.2e", err) + " (" + std::to_string(runs[name]) + " checks), ";
  }
  report(1, "gradient correctness", ok,
         detail + std::to_string(kinks) + " coordinates matched a one-sided difference at a kink, " +
             fmt("%.1f s", secs));
}

// -----------------------------------------------------------------------------
// 2. Oracle equivalence on 100 instances up to 256 points
// -----------------------------------------------------------------------------

void oracle_equivalence() {
  std::mt19937_64 rng(2);
  int knn_bad = 0, fps_bad = 0, voxel_bad = 0, attn_bad = 0;
  double loss_err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 9 + rng() % 248;
    // Every other instance sits on a coarse lattice so ties are exercised.
    Matrix c(Eigen::Index(n), 3);
    std::uniform_int_distribution<int> lattice(-3, 3);
    c = uniform(Eigen::Index(n), 3, rng);
    if (trial % 2)
      for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = 0.25 * lattice(rng);
    const PointCloud cloud(c);

    const std::size_t k = 1 + rng() % std::min<std::size_t>(n - 1, 24);
    for (std::size_t q = 0; q < n; q += 1 + n / 16)
      for (bool self : {true, false})
        knn_bad += knn(cloud, q, k, {.include_self = self}).indices != oracle::knn(c, q, k, self);

    const std::size_t m = 1 + rng() % n, start = rng() % n;
    fps_bad += farthest_point_sample(cloud, m, start).indices != oracle::fps(c, m, start);

    const double size = 0.05 + 0.6 * double(rng() % 1000) / 1000.0;
    voxel_bad += voxel_sample(cloud, size).indices != oracle::voxel(c, size);

    const Matrix x = uniform(Eigen::Index(1 + rng() % 64), Eigen::Index(1 + rng() % 8), rng);
    ad::Tape t;
    attn_bad += (ad::self_attention(t.constant(x)).value() - oracle::attention(x)).cwiseAbs().maxCoeff() > 1e-9;

    const std::size_t kk = 2 * (1 + rng() % 4);
    const Matrix feats = uniform(Eigen::Index(n), 3, rng);
    const ReconNets nets = make_recon_nets("r", 3, kk, rng, 16);
    const auto neighbors = knn_all(cloud, kk, {.include_self = false});
    const auto pl = point_loss(t, c, neighbors, reconstruct_points(t, c, t.constant(feats), neighbors, nets.point));
    for (std::size_t i = 0; i < n; ++i) {
      const Matrix o = oracle::reconstruct(c, feats, neighbors[i].indices, nets.point);
      loss_err = std::max(loss_err, std::abs(pl.value()(Eigen::Index(i), 0) - oracle::euclid(cloud.point(i), o.row(0))));
    }
    const auto patches = partition_patches(cloud, default_num_patches(n, kk), kk, std::uint64_t(trial));
    const auto sl = shape_loss(t, c, patches, reconstruct_shapes(t, c, t.constant(feats), patches, nets.shape));
    for (std::size_t j = 0; j < patches.size(); ++j) {
      const Matrix o = oracle::reconstruct(c, feats, patches[j].retained, nets.shape);
      double expect = 0;
      for (std::size_t r = 0; r < kk; ++r) expect += oracle::euclid(cloud.point(patches[j].members[r]), o.row(Eigen::Index(r)));
      loss_err = std::max(loss_err, std::abs(sl.value()(Eigen::Index(j), 0) - expect));
    }
  }
  const bool ok = knn_bad == 0 && fps_bad == 0 && voxel_bad == 0 && attn_bad == 0 && loss_err <= 1e-9;
  report(2, "oracle equivalence", ok,
         "mismatches knn " + std::to_string(knn_bad) + ", fps " + std::to_string(fps_bad) + ", voxel " +
             std::to_string(voxel_bad) + ", attention " + std::to_string(attn_bad) + "; max loss deviation " +
             fmt("%.2e", loss_err) + " over 100 instances");
}

// -----------------------------------------------------------------------------
// 3. Algorithm-1 fidelity
// -----------------------------------------------------------------------------

void algorithm_one() {
  bool ok = true;
  std::mt19937_64 rng(3);
  // Single patch whose normalized loss is L: three patches with losses 0, 1, L.
  for (double L : {0.0, 0.1, 0.25, 0.5, 0.9, 1.0}) {
    const std::vector<Patch> ps{{0, {0, 1}, {0}, {1}}, {2, {2, 3}, {2}, {3}}, {4, {4, 5, 6, 7}, {5, 7}, {4, 6}}};
    const auto t = score(std::vector<double>(8, 0.0), ps, std::vector<double>{0.0, 1.0, L}, 0.0);
    for (std::size_t i : {5, 7}) ok = ok && t.shape_score[i] == L;
    for (std::size_t i : {4, 6}) ok = ok && t.shape_score[i] == 1.0 - L;
  }
  // alpha endpoints reduce the ranking to one score.
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 20 + rng() % 50;
    std::vector<double> point(n);
    for (double& v : point) v = std::uniform_real_distribution<double>(0, 3)(rng);
    const PointCloud cloud(uniform(Eigen::Index(n), 3, rng));
    const auto ps = partition_patches(cloud, 5, 6, std::uint64_t(trial));
    std::vector<double> shape(ps.size());
    for (double& v : shape) v = std::uniform_real_distribution<double>(0, 3)(rng);
    const auto one = score(point, ps, shape, 1.0), zero = score(point, ps, shape, 0.0);
    ok = ok && one.total == one.point_score && zero.total == zero.shape_score;
    const std::size_t m = 1 + rng() % n;
    ScoreTable by_point = one, by_shape = zero;
    by_point.total = one.point_score;
    by_shape.total = zero.shape_score;
    ok = ok && sample_top_m(one, m).indices == sample_top_m(by_point, m).indices &&
         sample_top_m(zero, m).indices == sample_top_m(by_shape, m).indices;
  }
  report(3, "Algorithm-1 fidelity", ok, "removed=L, retained=1-L for 6 values of L; alpha in {0,1} rankings on 50 instances");
}

// -----------------------------------------------------------------------------
// 5. Benchmark (also yields the trained samplers used by 4 and 6)
// -----------------------------------------------------------------------------

struct SeedRun {
  std::uint64_t seed;
  std::map<std::string, std::map<std::size_t, double>> acc;
  RepsSampler sampler;
};

std::vector<SeedRun> run_benchmarks(double& secs) {
  const auto t0 = Clock::now();
  std::vector<SeedRun> runs;
  for (std::uint64_t seed : {0, 1, 2}) {
    BenchmarkConfig cfg;
    cfg.seed = seed;
    cfg.samplers = {"random", "fps", "voxel", "reps"};
    const auto t1 = Clock::now();
    auto res = run_benchmark(cfg);
    SeedRun r{seed, {}, RepsSampler::from_classifier(res.classifier)};
    std::cout << "  seed " << seed << " (" << fmt("%.0f s", seconds_since(t1)) << "):";
    for (const auto& row : res.rows) {
      r.acc[row.sampler][row.m] = row.accuracy;
      std::cout << ' ' << row.sampler << '@' << row.m << '=' << fmt("%.3f", row.accuracy);
    }
    std::cout << "; task val acc " << fmt("%.3f", res.task_report.epochs.back().val_accuracy) << std::endl;
    runs.push_back(std::move(r));
  }
  secs = seconds_since(t0);
  return runs;
}

void sampler_ordering(const std::vector<SeedRun>& runs, double secs) {
  auto mean = [&](const std::string& s, std::size_t m) {
    double sum = 0;
    for (const auto& r : runs) sum += r.acc.at(s).at(m);
    return sum / double(runs.size());
  };
  bool ok = secs < 1800;
  std::string detail;
  for (std::size_t m : {32u, 64u}) {
    const double reps = mean("reps", m), fps = mean("fps", m), rs = mean("random", m);
    ok = ok && reps >= fps && fps >= rs;
    detail += "M=" + std::to_string(m) + " reps " + fmt("%.3f", reps) + " fps " + fmt("%.3f", fps) + " rs " +
              fmt("%.3f", rs) + " (voxel " + fmt("%.3f", mean("voxel", m)) + "); ";
  }
  const double margin = mean("reps", 32) - mean("random", 32);
  ok = ok && margin >= 0.05;
  report(5, "sampler ordering REPS >= FPS >= RS", ok,
         detail + "REPS-RS at 32 = " + fmt("%+.1f", 100 * margin) + " pts; train+eval " + fmt("%.0f s", secs));
}

// -----------------------------------------------------------------------------
// 4. Edge affinity on held-out cubes
// -----------------------------------------------------------------------------

void edge_affinity(const std::vector<SeedRun>& runs) {
  double edge_sum = 0, interior_sum = 0;
  std::size_t clouds = 0;
  std::string per_seed;
  for (const auto& r : runs) {
    std::mt19937_64 rng(mix_seed(r.seed, 606));
    double e_seed = 0, i_seed = 0;
    for (int c = 0; c < 20; ++c) {
      const auto cube = make_cube_with_edges(512, rng);
      const ScoreTable t = r.sampler.scores(cube.cloud, r.sampler.config(mix_seed(r.seed, std::uint64_t(c)), false));
      double e = 0, i = 0;
      std::size_t ne = 0, ni = 0;
      for (std::size_t p = 0; p < cube.cloud.size(); ++p) {
        if (cube.edge_distance[p] <= 0.05) {
          e += t.point_score[p];
          ++ne;
        } else {
          i += t.point_score[p];
          ++ni;
        }
      }
      if (ne == 0 || ni == 0) continue;
      e_seed += e / double(ne);
      i_seed += i / double(ni);
      edge_sum += e / double(ne);
      interior_sum += i / double(ni);
      ++clouds;
    }
    per_seed += "seed " + std::to_string(r.seed) + " edge " + fmt("%.3f", e_seed / 20) + " interior " +
                fmt("%.3f", i_seed / 20) + "; ";
  }
  const double edge = edge_sum / double(clouds), interior = interior_sum / double(clouds);
  report(4, "edge affinity", clouds >= 60 && edge > interior,
         per_seed + "overall edge " + fmt("%.3f", edge) + " > interior " + fmt("%.3f", interior) + " over " +
             std::to_string(clouds) + " clouds");
}

// -----------------------------------------------------------------------------
// 6. Table legs at ratio 1/8
// -----------------------------------------------------------------------------

void structure_preservation(const SeedRun& run) {
  const NamedSampler reps = reps_named_sampler(run.sampler), rs = random_sampler(), fps = fps_sampler();
  int reps_ok = 0, rs_ok = 0, fps_ok = 0;
  for (int inst = 0; inst < 50; ++inst) {
    std::mt19937_64 rng(mix_seed(6, std::uint64_t(inst)));
    const auto table = make_table(512, rng);
    const std::size_t m = table.cloud.size() / 8;
    auto legs_kept = [&](const NamedSampler& s) {
      std::set<int> legs;
      for (std::size_t i : s.fn(table.cloud, m, std::uint64_t(inst)).indices)
        if (table.leg[i] >= 0) legs.insert(table.leg[i]);
      return legs.size() == 4;
    };
    reps_ok += legs_kept(reps);
    rs_ok += legs_kept(rs);
    fps_ok += legs_kept(fps);
  }
  report(6, "structure preservation (table legs, ratio 1/8)", reps_ok >= 45,
         "REPS keeps all 4 legs in " + std::to_string(reps_ok) + "/50; recorded baselines RS " +
             std::to_string(rs_ok) + "/50, FPS " + std::to_string(fps_ok) + "/50");
}

// -----------------------------------------------------------------------------
// 7 and 8. The command-line tool, run as a separate process
// -----------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int shell(const fs::path& cwd, const std::string& args, const std::string& stdout_name) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" REPS_CLI_PATH "' " + args + " > " + stdout_name + " 2>&1";
  return std::system(cmd.c_str());
}

void cli_determinism(const fs::path& work) {
  const fs::path shared = work / "shared";
  fs::create_directories(shared);
  std::mt19937_64 rng(7);
  io::write_cloud(shared / "cloud.xyz", make_shape(2, 300, rng));
  const std::string cloud = (shared / "cloud.xyz").string();
  const std::string weights = (shared / "reps.bin").string(), task = (shared / "task.bin").string();
  if (shell(shared, "train --dataset synthetic --per-class 3 --points 96 --k 8 --epochs 1 --seed 1 --out-weights " +
                        weights, "w.log") != 0 ||
      shell(shared, "train --model pointnet --dataset synthetic --per-class 4 --points 96 --epochs 2 --seed 1 "
                    "--out-weights " + task, "t.log") != 0) {
    report(7, "CLI determinism", false, "could not prepare fixtures: " + slurp(shared / "w.log") + slurp(shared / "t.log"));
    return;
  }
  struct Cmd {
    std::string args;
    std::vector<std::string> files;
  };
  const std::vector<Cmd> cmds{
      {"sample --input " + cloud + " --output r.xyz --method random --m 50 --seed 3", {"r.xyz"}},
      {"sample --input " + cloud + " --output f.ply --method fps --ratio 0.2 --seed 3", {"f.ply"}},
      {"sample --input " + cloud + " --output v.xyz --method voxel --voxel-size 0.3", {"v.xyz"}},
      {"sample --input " + cloud + " --output s.xyz --method reps --m 40 --prefilter --seed 3 --weights " + weights,
       {"s.xyz"}},
      {"score --input " + cloud + " --output score.csv --seed 3 --weights " + weights, {"score.csv"}},
      {"train --dataset synthetic --per-class 2 --points 64 --k 4 --epochs 2 --seed 3 --out-weights w.bin",
       {"w.bin", "w.bin.json", "w.bin.log.jsonl"}},
      {"train --model pointnet --dataset synthetic --per-class 2 --points 64 --epochs 2 --seed 3 --out-weights p.bin",
       {"p.bin", "p.bin.json", "p.bin.log.jsonl"}},
      {"eval --dataset synthetic --per-class 3 --points 96 --sizes 48,16 --seed 3 --output e.csv --task-weights " +
           task + " --sampler-weights " + weights,
       {"e.csv", "e.csv.json"}},
      {"convert --input " + cloud + " --output c.ply", {"c.ply"}},
      {"ablate --output a.csv --seed 3 --train-per-class 2 --test-per-class 2 --points 80 --task-epochs 1 "
       "--sampler-per-class 1 --sampler-epochs 1 --sizes 8 --ks 4,8 --alphas 0,1 --k 4",
       {"a.csv"}},
  };
  int identical = 0;
  std::string bad;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    bool same = true;
    std::string first_out;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = work / ("run" + std::to_string(rep)) / std::to_string(i);
      fs::create_directories(dir);
      same = same && shell(dir, cmds[i].args, "stdout.txt") == 0;
    }
    for (const std::string& f : cmds[i].files) {
      const std::string a = slurp(work / "run0" / std::to_string(i) / f), b = slurp(work / "run1" / std::to_string(i) / f);
      same = same && !a.empty() && a == b;
    }
    same = same && slurp(work / "run0" / std::to_string(i) / "stdout.txt") ==
                       slurp(work / "run1" / std::to_string(i) / "stdout.txt");
    identical += same;
    if (!same) bad += " [" + cmds[i].args.substr(0, cmds[i].args.find(' ')) + "]";
  }
  report(7, "CLI determinism", identical == int(cmds.size()),
         std::to_string(identical) + "/" + std::to_string(cmds.size()) +
             " seeded commands byte-identical across two runs (files and stdout)" + bad);
}

void ablation_harness(const fs::path& work) {
  const fs::path dir = work / "ablation";
  fs::create_directories(dir);
  const auto t0 = Clock::now();
  const int rc = shell(dir,
                       "ablate --output ablation.csv --seed 0 --train-per-class 25 --test-per-class 10 --points 256 "
                       "--task-epochs 4 --sampler-per-class 4 --sampler-epochs 1 --sizes 32,64 --ks 4,8,16,32 "
                       "--alphas 0,0.2,0.4,0.6,0.8,1",
                       "stdout.txt");
  std::istringstream is(slurp(dir / "ablation.csv"));
  std::string line;
  std::getline(is, line);
  bool ok = rc == 0 && line == "parameter,value,M,accuracy";
  std::set<std::string> ks, alphas;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string param, value, m, acc;
    std::getline(ls, param, ',');
    std::getline(ls, value, ',');
    std::getline(ls, m, ',');
    std::getline(ls, acc, ',');
    const double a = std::stod(acc);
    ok = ok && a >= 0 && a <= 1;
    (param == "k" ? ks : alphas).insert(value);
    ++rows;
  }
  ok = ok && ks == std::set<std::string>{"4", "8", "16", "32"} &&
       alphas == std::set<std::string>{"0", "0.2", "0.4", "0.6", "0.8", "1"} && rows == 20;
  report(8, "ablation harness", ok,
         std::to_string(rows) + " CSV rows (K 4/8/16/32 and alpha 0..1 step 0.2, M 32/64) in " +
             fmt("%.0f s", seconds_since(t0)) + "; no accuracy target");
  if (!ok) std::cout << slurp(dir / "stdout.txt");
}

}  // namespace

int main() {
  std::cout << "REPS acceptance run" << std::endl;
  const fs::path work = fs::temp_directory_path() / "reps_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  gradient_correctness();
  oracle_equivalence();
  algorithm_one();
  double bench_secs = 0;
  std::cout << "  training and evaluating the benchmark on 3 seeds..." << std::endl;
  const auto runs = run_benchmarks(bench_secs);
  edge_affinity(runs);
  sampler_ordering(runs, bench_secs);
  structure_preservation(runs.front());
  cli_determinism(work);
  ablation_harness(work);
  std::cout << "[SUBSTITUTED] 9. full-scale results (ModelNet40 OA 94.1%, ShapeNetPart mIoU 86.7%, absolute sampler "
               "accuracies): not reproducible at desk scale, substituted by criteria 3-6"
            << std::endl;

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  int failed = 0;
  std::cout << "summary:";
  for (const auto& v : verdicts) {
    std::cout << ' ' << v.id << (v.pass ? "=pass" : "=FAIL");
    failed += !v.pass;
  }
  std::cout << std::endl;
  fs::remove_all(work);
  return failed == 0 ? 0 : 1;
}
