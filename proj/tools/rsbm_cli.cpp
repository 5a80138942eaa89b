// rsbm: data generation, training, sampling, ablation sweeps and oracle checks.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rsbm/checkpoint.hpp"
#include "rsbm/pipeline.hpp"
#include "rsbm/theory_oracle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rsbm;

namespace {

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read dataset " + path);
  Dataset d = read_dataset_csv(in);
  if (d.empty()) throw std::runtime_error("dataset " + path + " has no rows");
  return d;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  int n = 2000;
  std::string shapes = "star,figure8";
  int tasks = 16;
  double noise = 0.05;
  int horizon = Trajectory::kDefaultHorizon;
  std::string out = "dataset.csv";
  std::uint64_t seed = 0;
};

int run_generate(const GenerateArgs& a) {
  std::vector<ToyShape> shapes;
  for (const auto& s : split(a.shapes)) shapes.push_back(parse_shape(s));
  if (shapes.empty()) throw std::runtime_error("--shapes is empty");
  Rng rng = make_rng(a.seed, 0);
  const auto tasks = make_task_family(shapes, a.tasks, a.noise, rng);
  const Dataset data = generate_dataset(a.n, tasks, rng, a.horizon);
  auto out = open_out(a.out);
  write_dataset_csv(out, data);
  std::cout << "wrote " << data.size() << " samples to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out_dir = "run";
  double epsilon = 0.5;
  std::string target = "v";
  std::string prior = "learned";
  double perturbation = 1.0;
  double gaussian_scale = 10.0;
  int epochs = 30;
  double lr = 1e-4;
  int batch = 256;
  int prior_epochs = 30;
  double prior_lr = 1e-3;
  int prior_batch = 256;
  std::string hidden = "128,128";
  bool hide_phase = false;
  std::uint64_t seed = 0;
};

struct TrainingFlags {
  double epsilon, perturbation, gaussian_scale, lr, prior_lr;
  std::string target, prior, hidden;
  int epochs, batch, prior_epochs, prior_batch;
  bool hide_phase;
};

ExperimentConfig make_config(const TrainingFlags& f, int horizon, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.bridge.epsilon = f.epsilon;
  cfg.bridge.validate();
  cfg.target = parse_target_kind(f.target);
  cfg.prior.variant = parse_prior_variant(f.prior);
  cfg.prior.perturbation_scale = f.perturbation;
  cfg.prior.gaussian_scale = f.gaussian_scale;
  cfg.prior.validate();
  cfg.arch.horizon = horizon;
  cfg.arch.hidden.clear();
  for (const auto& h : split(f.hidden)) cfg.arch.hidden.push_back(std::stoi(h));
  if (cfg.arch.hidden.empty()) throw std::runtime_error("--hidden is empty");
  cfg.epochs = f.epochs;
  cfg.lr = f.lr;
  cfg.batch = f.batch;
  cfg.prior_training.epochs = f.prior_epochs;
  cfg.prior_training.lr = f.prior_lr;
  cfg.prior_training.batch_size = f.prior_batch;
  cfg.hide_phase = f.hide_phase;
  cfg.seed = seed;
  return cfg;
}

TrainingFlags flags_of(const TrainArgs& a) {
  return {a.epsilon, a.perturbation, a.gaussian_scale, a.lr, a.prior_lr, a.target, a.prior, a.hidden,
          a.epochs, a.batch, a.prior_epochs, a.prior_batch, a.hide_phase};
}

int run_train(const TrainArgs& a) {
  const Dataset data = load_dataset(a.data);
  const ExperimentConfig cfg = make_config(flags_of(a), data.front().a0.horizon(), a.seed);
  const TrainedPipeline p = train_pipeline(data, cfg);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  save_velocity_model((dir / "velocity.ckpt").string(), p.model);
  save_prior((dir / "prior.ckpt").string(), p.prior);
  {
    auto out = open_out(dir / "loss.csv");
    out << "epoch,loss\n";
    for (size_t i = 0; i < p.loss_trace.size(); ++i) out << i + 1 << ',' << num(p.loss_trace[i]) << '\n';
  }
  if (p.prior.learned()) {
    auto out = open_out(dir / "prior_loss.csv");
    out << "epoch,loss\n";
    const auto& trace = p.prior.learned()->epoch_losses;
    for (size_t i = 0; i < trace.size(); ++i) out << i + 1 << ',' << num(trace[i]) << '\n';
  }
  const json run = {{"data", a.data},         {"epsilon", a.epsilon}, {"target", a.target},
                    {"prior", a.prior},       {"epochs", a.epochs},   {"lr", a.lr},
                    {"batch", a.batch},       {"hidden", a.hidden},   {"hide_phase", a.hide_phase},
                    {"seed", a.seed}};
  open_out(dir / "run.json") << run.dump(2) << '\n';
  std::cout << "trained " << a.epochs << " epochs";
  if (!p.loss_trace.empty()) std::cout << ", final loss " << p.loss_trace.back();
  std::cout << "; checkpoints in " << dir.string() << "\n";
  return 0;
}

TrainedPipeline load_run(const fs::path& dir) {
  TrainedPipeline p{load_velocity_model((dir / "velocity.ckpt").string()),
                    load_prior((dir / "prior.ckpt").string()),
                    {},
                    false};
  std::ifstream meta(dir / "run.json");
  if (meta) p.hide_phase = json::parse(meta).value("hide_phase", false);
  return p;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string run_dir = "run";
  std::string data;
  int k = 3;
  std::string solver = "heun";
  double rho = 7.0;
  int n_eval = 0;
  std::optional<double> epsilon;
  std::optional<std::string> target;
  std::string predictions;
  std::string metrics;
  std::uint64_t seed = 0;
};

int run_sample(const SampleArgs& a) {
  const fs::path dir(a.run_dir);
  const TrainedPipeline p = load_run(dir);
  if (a.epsilon && *a.epsilon != p.model.bridge().epsilon) {
    throw std::runtime_error("--epsilon " + num(*a.epsilon) + " does not match the checkpoint (" +
                             num(p.model.bridge().epsilon) + ")");
  }
  if (a.target && parse_target_kind(*a.target) != p.model.target()) {
    throw std::runtime_error("--target " + *a.target + " does not match the checkpoint (" +
                             to_string(p.model.target()) + ")");
  }
  Dataset test = load_dataset(a.data);
  if (a.n_eval > 0 && a.n_eval < static_cast<int>(test.size())) test.resize(a.n_eval);

  EvalOptions eo;
  eo.solver = parse_solver(a.solver);
  eo.k = a.k;
  eo.rho = a.rho;
  eo.seed = a.seed;
  const Evaluation ev = evaluate(p, test, eo);

  const fs::path pred_path = a.predictions.empty() ? dir / "predictions.csv" : fs::path(a.predictions);
  {
    auto out = open_out(pred_path);
    const int h = test.front().a0.horizon();
    out << "sample";
    for (int j = 0; j < h; ++j) out << ",x" << j << ",y" << j;
    out << '\n';
    for (size_t i = 0; i < ev.predictions.size(); ++i) {
      out << i;
      for (double v : ev.predictions[i].flat()) out << ',' << num(v);
      out << '\n';
    }
  }
  const json metrics = {{"k", a.k},
                        {"solver", a.solver},
                        {"rho", a.rho},
                        {"nfe", ev.report.nfe},
                        {"n", test.size()},
                        {"mse", ev.report.mse},
                        {"cos_sim", ev.report.cos_sim},
                        {"fde", ev.report.fde},
                        {"epsilon", p.model.bridge().epsilon},
                        {"target", to_string(p.model.target())},
                        {"prior", to_string(p.prior.kind().variant)},
                        {"seed", a.seed}};
  const fs::path metrics_path = a.metrics.empty() ? dir / "metrics.json" : fs::path(a.metrics);
  open_out(metrics_path) << metrics.dump(2) << '\n';
  std::cout << "nfe " << ev.report.nfe << "  mse " << ev.report.mse << "  cos_sim " << ev.report.cos_sim
            << "  fde " << ev.report.fde << "\n";
  return 0;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs : TrainArgs {
  std::string sweep;
  std::string test_data;
  double holdout = 0.1;
  int seeds = 3;
  std::string ks;
  std::string epsilons = "0.1,0.3,0.5,0.7,1.0";
  double rho = 7.0;
  int jobs = 0;
  std::string out = "sweep.csv";
};

struct EvalPoint {
  Solver solver;
  int k;
};

struct Cell {
  std::string config;
  ExperimentConfig cfg;
  std::vector<EvalPoint> evals;
};

struct Row {
  std::string config;
  std::uint64_t seed;
  EvalPoint at;
  EvalReport report;
};

std::vector<int> int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& x : split(s)) out.push_back(std::stoi(x));
  return out;
}

std::vector<Cell> build_cells(const AblateArgs& a, int horizon, std::uint64_t seed) {
  const auto base = [&](double eps, const std::string& target, const std::string& prior) {
    TrainingFlags f = flags_of(a);
    f.epsilon = eps;
    f.target = target;
    f.prior = prior;
    return make_config(f, horizon, seed);
  };
  const auto heun_at = [](const std::vector<int>& ks) {
    std::vector<EvalPoint> e;
    for (int k : ks) e.push_back({Solver::heun, k});
    return e;
  };
  std::vector<Cell> cells;
  if (a.sweep == "epsilon") {
    const auto ks = int_list(a.ks.empty() ? "1,3,5,10" : a.ks);
    for (const auto& e : split(a.epsilons)) {
      cells.push_back({"eps=" + e, base(std::stod(e), a.target, a.prior), heun_at(ks)});
    }
  } else if (a.sweep == "target") {
    const auto ks = int_list(a.ks.empty() ? "3" : a.ks);
    for (const char* t : {"v", "x0", "eps"}) {
      cells.push_back({std::string("target=") + t, base(a.epsilon, t, a.prior), heun_at(ks)});
    }
  } else if (a.sweep == "solver") {
    // each heun k is paired with euler at the same NFE, 2k - 1
    const auto ks = int_list(a.ks.empty() ? "2,3,5,10" : a.ks);
    std::vector<EvalPoint> evals;
    for (int k : ks) {
      evals.push_back({Solver::heun, k});
      evals.push_back({Solver::euler, nfe_of(Solver::heun, k)});
    }
    cells.push_back({"solver", base(a.epsilon, a.target, a.prior), evals});
  } else if (a.sweep == "prior") {
    const auto ks = int_list(a.ks.empty() ? "3" : a.ks);
    for (const char* prior : {"gaussian", "perturbed", "learned"}) {
      for (double eps : {1.0, 0.5}) {
        cells.push_back({std::string("prior=") + prior + ",eps=" + num(eps), base(eps, a.target, prior),
                         heun_at(ks)});
      }
    }
  } else {
    throw CLI::ValidationError("--sweep", "unknown sweep '" + a.sweep + "' (epsilon|target|solver|prior)");
  }
  return cells;
}

int run_ablate(const AblateArgs& a) {
  Dataset train_set = load_dataset(a.data);
  Dataset test_set;
  if (!a.test_data.empty()) {
    test_set = load_dataset(a.test_data);
  } else {
    const auto n_test = static_cast<size_t>(std::ceil(a.holdout * train_set.size()));
    if (n_test == 0 || n_test >= train_set.size()) throw std::runtime_error("--holdout leaves no train or test data");
    test_set.assign(train_set.end() - static_cast<long>(n_test), train_set.end());
    train_set.resize(train_set.size() - n_test);
  }
  const int horizon = train_set.front().a0.horizon();

  std::vector<Cell> cells;
  for (int s = 0; s < a.seeds; ++s) {
    for (auto& c : build_cells(a, horizon, a.seed + s)) cells.push_back(std::move(c));
  }

  std::vector<std::vector<Row>> results(cells.size());
  std::atomic<size_t> next{0};
  std::mutex log_mutex;
  const auto worker = [&]() {
    for (size_t i = next++; i < cells.size(); i = next++) {
      const Cell& cell = cells[i];
      const TrainedPipeline p = train_pipeline(train_set, cell.cfg);
      for (const EvalPoint& e : cell.evals) {
        EvalOptions eo;
        eo.solver = e.solver;
        eo.k = e.k;
        eo.rho = a.rho;
        eo.seed = cell.cfg.seed;
        results[i].push_back({cell.config, cell.cfg.seed, e, evaluate(p, test_set, eo).report});
      }
      std::lock_guard lock(log_mutex);
      std::cerr << "done " << cell.config << " seed " << cell.cfg.seed << "\n";
    }
  };
  const int jobs = a.jobs > 0 ? a.jobs : std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int j = 0; j < std::min<int>(jobs, static_cast<int>(cells.size())); ++j) {
    pool.emplace_back([&]() {
      try {
        worker();
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cells.size();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  auto out = open_out(a.out);
  out << "sweep,config,seed,solver,k,nfe,mse,cos_sim,fde\n";
  for (const auto& rows : results) {
    for (const Row& r : rows) {
      out << a.sweep << ",\"" << r.config << "\"," << r.seed << ',' << to_string(r.at.solver) << ',' << r.at.k
          << ',' << r.report.nfe << ',' << num(r.report.mse) << ',' << num(r.report.cos_sim) << ','
          << num(r.report.fde) << '\n';
    }
  }
  std::cout << "wrote " << cells.size() << " trained configs to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  std::string json_path;
  double perturb_kernel = 0.0;
  std::string run_dir;
  std::string data;
  std::uint64_t seed = 0;
};

int run_verify(const VerifyArgs& a) {
  oracle::VerifyOptions opts;
  opts.kernel_perturbation = a.perturb_kernel;
  opts.seed = a.seed;
  std::optional<TrainedPipeline> trained;
  Dataset test;
  if (!a.run_dir.empty()) {
    if (a.data.empty()) throw CLI::ValidationError("--run", "--run needs --data for the test set");
    trained = load_run(a.run_dir);
    test = load_dataset(a.data);
    opts.bridge = trained->model.bridge();
    opts.trained = &*trained;
    opts.test_set = &test;
  }
  const oracle::OracleReport report = oracle::run_all(opts);
  for (const auto& c : report.checks) {
    std::printf("%s %-40s measured %-12.6g expected %-12.6g tol %.3g\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                c.measured, c.expected, c.tolerance);
  }
  if (!a.json_path.empty()) open_out(a.json_path) << report.to_json().dump(2) << '\n';
  const bool ok = report.all_pass();
  std::printf("%s\n", ok ? "all checks passed" : "some checks failed");
  return ok ? 0 : 1;
}

void add_training_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--epsilon", a.epsilon, "Entropic regularisation in (0, 1]")->capture_default_str();
  cmd->add_option("--target", a.target, "Network target")
      ->check(CLI::IsMember({"v", "x0", "eps"}))
      ->capture_default_str();
  cmd->add_option("--prior", a.prior, "Prior endpoint variant")
      ->check(CLI::IsMember({"gaussian", "perturbed", "learned"}))
      ->capture_default_str();
  cmd->add_option("--perturbation", a.perturbation, "Noise std of the perturbed prior")->capture_default_str();
  cmd->add_option("--gaussian-scale", a.gaussian_scale, "Std of the gaussian prior")->capture_default_str();
  cmd->add_option("--epochs", a.epochs, "Velocity training epochs")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--lr", a.lr, "Velocity learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--batch", a.batch, "Velocity batch size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--prior-epochs", a.prior_epochs, "Learned prior epochs")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--prior-lr", a.prior_lr, "Learned prior learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--prior-batch", a.prior_batch, "Learned prior batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--hidden", a.hidden, "Hidden widths, comma separated")->capture_default_str();
  cmd->add_flag("--hide-phase", a.hide_phase, "Drop goal and phase from the context");
  cmd->add_option("--seed", a.seed, "Random seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rectified Schrodinger bridge trajectory generator"};
  app.set_config("--config", "", "TOML/INI file; command line flags take precedence");
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a toy trajectory dataset as CSV");
  g->add_option("--n", gen.n, "Number of samples")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--shapes", gen.shapes, "Comma separated shapes (star, figure8)")->capture_default_str();
  g->add_option("--tasks", gen.tasks, "Number of task poses")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--noise", gen.noise, "Waypoint jitter std")->check(CLI::NonNegativeNumber)->capture_default_str();
  g->add_option("--horizon", gen.horizon, "Waypoints per trajectory")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  g->add_option("--out", gen.out, "Output CSV")->capture_default_str();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train prior and velocity field, write checkpoints");
  t->add_option("--data", tr.data, "Training dataset CSV")->required()->check(CLI::ExistingFile);
  t->add_option("--out-dir", tr.out_dir, "Checkpoint directory")->capture_default_str();
  add_training_flags(t, tr);

  SampleArgs sa;
  auto* s = app.add_subcommand("sample", "Generate trajectories from checkpoints and score them");
  s->add_option("--run", sa.run_dir, "Checkpoint directory")->capture_default_str();
  s->add_option("--data", sa.data, "Evaluation dataset CSV")->required()->check(CLI::ExistingFile);
  s->add_option("--k", sa.k, "Number of schedule nodes")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--solver", sa.solver, "ODE solver")->check(CLI::IsMember({"heun", "euler"}))->capture_default_str();
  s->add_option("--rho", sa.rho, "Schedule warp")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--n-eval", sa.n_eval, "Evaluate only the first N samples (0 = all)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  s->add_option("--epsilon", sa.epsilon, "Expected epsilon; must match the checkpoint");
  s->add_option("--target", sa.target, "Expected target kind; must match the checkpoint");
  s->add_option("--predictions", sa.predictions, "Predictions CSV (default <run>/predictions.csv)");
  s->add_option("--metrics", sa.metrics, "Metrics JSON (default <run>/metrics.json)");
  s->add_option("--seed", sa.seed, "Seed for the prior draws")->capture_default_str();

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Run an ablation sweep and write a long-format CSV");
  a->add_option("--sweep", ab.sweep, "epsilon | target | solver | prior")->required();
  a->add_option("--data", ab.data, "Training dataset CSV")->required()->check(CLI::ExistingFile);
  a->add_option("--test-data", ab.test_data, "Test dataset CSV (default: hold out the tail of --data)")
      ->check(CLI::ExistingFile);
  a->add_option("--holdout", ab.holdout, "Held-out fraction when --test-data is absent")->capture_default_str();
  a->add_option("--seeds", ab.seeds, "Number of seeds, starting at --seed")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  a->add_option("--ks", ab.ks, "Comma separated k values (sweep specific default)");
  a->add_option("--epsilons", ab.epsilons, "Epsilon grid for the epsilon sweep")->capture_default_str();
  a->add_option("--rho", ab.rho, "Schedule warp")->check(CLI::PositiveNumber)->capture_default_str();
  a->add_option("--jobs", ab.jobs, "Worker threads (0 = hardware)")->capture_default_str();
  a->add_option("--out", ab.out, "Output CSV")->capture_default_str();
  add_training_flags(a, ab);

  VerifyArgs ve;
  auto* v = app.add_subcommand("verify", "Run the analytic and numerical consistency checks");
  v->add_option("--json", ve.json_path, "Write the report as JSON");
  v->add_option("--perturb-kernel", ve.perturb_kernel, "Inject an epsilon-dependent kernel defect (testing)")
      ->capture_default_str();
  v->add_option("--run", ve.run_dir, "Checkpoint directory to include in the approximation check");
  v->add_option("--data", ve.data, "Test dataset for --run")->check(CLI::ExistingFile);
  v->add_option("--seed", ve.seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*g) return run_generate(gen);
    if (*t) return run_train(tr);
    if (*s) return run_sample(sa);
    if (*a) return run_ablate(ab);
    if (*v) return run_verify(ve);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
