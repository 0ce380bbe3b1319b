// rifle: command-line front end for the sparse GEP solver, the statistical
// models, the scenario generators and the experiment harness.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rifle/bench.hpp"
#include "rifle/io.hpp"
#include "rifle/oracle.hpp"
#include "rifle/sim.hpp"
#include "rifle/solver.hpp"
#include "rifle/stat_models.hpp"

namespace {

using nlohmann::json;
using namespace rifle;

json sparse_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) != 0.0) out.push_back({i, v(i)});
  return out;
}

json support_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) != 0.0) out.push_back(i);
  return out;
}

json fit_json(const RifleResult& fit) {
  return {{"v", sparse_json(fit.v)},
          {"support", support_json(fit.v)},
          {"rho", fit.rho},
          {"iterations", fit.iterations},
          {"stage_iterations", fit.stage_iterations},
          {"converged", fit.converged}};
}

json cv_json(const CVResult& cv) {
  return {{"k_grid", cv.k_grid},
          {"mean_scores", cv.mean_scores},
          {"fold_scores", cv.fold_scores},
          {"selected_k", cv.selected_k},
          {"higher_is_better", cv.higher_is_better}};
}

std::vector<int> read_labels(const std::string& path) {
  std::vector<int> out;
  for (double x : read_csv_vector(path)) {
    if (x != std::floor(x) || x < 0) throw Error(Errc::ParseError, path + ": labels must be nonnegative integers");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

// Options shared by every fitting subcommand.
struct FitFlags {
  std::optional<double> eta;
  std::uint64_t seed = 0;
  std::vector<std::size_t> schedule;
  bool no_warm_start = false;
  int max_iter = 2000;
  double tol = 1e-10;
  std::size_t folds = 5;

  void add(CLI::App* cmd, bool with_folds) {
    cmd->add_option("--eta", eta, "step size (default 1/(2.1 lambda_max(B)))");
    cmd->add_option("--seed", seed, "seed for the random start and CV folds");
    cmd->add_option("--schedule", schedule, "warm-start levels above k, e.g. 80,40,20")->delimiter(',');
    cmd->add_flag("--no-warm-start", no_warm_start, "run a single stage at k");
    cmd->add_option("--max-iter", max_iter, "iteration cap per stage")->check(CLI::NonNegativeNumber);
    cmd->add_option("--tol", tol, "stop when 1 - |v_t^T v_{t-1}| <= tol")->check(CLI::NonNegativeNumber);
    if (with_folds) cmd->add_option("--folds", folds, "cross-validation folds when several k are given");
  }

  FitOptions options() const {
    FitOptions o;
    o.eta = eta;
    o.max_iter = max_iter;
    o.tol = tol;
    o.warm_start = !no_warm_start;
    o.schedule = schedule;
    return o;
  }
};

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

std::size_t pick_k(const std::vector<std::size_t>& grid, const auto& data, const FitFlags& flags, RngState& rng,
                   json& out) {
  if (grid.size() == 1) return grid.front();
  const CVResult cv = cross_validate_k(data, grid, flags.folds, rng, flags.options());
  out["cv"] = cv_json(cv);
  return cv.selected_k;
}

int run_solve(const std::string& a, const std::string& b, std::size_t k, const FitFlags& flags) {
  const LoadedPair loaded = load_pair_csv(a, b);
  const RifleResult fit = fit_rifle(loaded.pair, k, flags.options(), flags.seed);
  json out = fit_json(fit);
  out["dim"] = loaded.pair.dim();
  out["k"] = k;
  out["warnings"] = loaded.warnings;
  print(out);
  return 0;
}

int run_fda(const std::string& x_path, const std::string& labels_path, const std::string& test_path,
            const std::string& test_labels_path, const std::vector<std::size_t>& grid, bool diagonal,
            const FitFlags& flags) {
  const LabeledDataset train(read_csv_matrix(x_path), read_labels(labels_path));
  RngState rng(flags.seed, 1);
  json out;
  const std::size_t k = pick_k(grid, train, flags, rng, out);
  const GEPProblem prob = fda_build(train, diagonal);
  const RifleResult fit = fit_rifle(prob.pair, k, flags.options(), flags.seed);
  out.update(fit_json(fit));
  out["k"] = k;
  if (!test_path.empty()) {
    const Matrix test_x = read_csv_matrix(test_path);
    const std::vector<int> predicted = fda_classify(fit.v, train, test_x);
    out["predictions"] = predicted;
    if (!test_labels_path.empty()) {
      const std::vector<int> truth = read_labels(test_labels_path);
      out["misclassified"] = count_mismatches(predicted, truth);
    }
  }
  print(out);
  return 0;
}

int run_cca(const std::string& x_path, const std::string& y_path, const std::vector<std::size_t>& grid,
            const FitFlags& flags) {
  const PairedDataset data(read_csv_matrix(x_path), read_csv_matrix(y_path));
  RngState rng(flags.seed, 1);
  json out;
  const std::size_t k = pick_k(grid, data, flags, rng, out);
  const GEPProblem prob = cca_build(data);
  const RifleResult fit = fit_rifle(prob.pair, k, flags.options(), flags.seed);
  const CanonicalPair cp = cca_split(fit.v, prob.meta);
  out.update(fit_json(fit));
  out["k"] = k;
  out["vx"] = sparse_json(cp.x);
  out["vy"] = sparse_json(cp.y);
  out["vx_zero"] = cp.x_zero;
  out["vy_zero"] = cp.y_zero;
  print(out);
  return 0;
}

int run_sir(const std::string& x_path, const std::string& y_path, std::size_t slices, bool categorical,
            const std::vector<std::size_t>& grid, const FitFlags& flags) {
  SlicedDataset data;
  data.x = read_csv_matrix(x_path);
  data.slices = slices;
  if (categorical) {
    data.response = read_labels(y_path);
  } else {
    data.response = read_csv_vector(y_path);
  }
  RngState rng(flags.seed, 1);
  json out;
  const std::size_t k = pick_k(grid, data, flags, rng, out);
  const GEPProblem prob = sir_build(data);
  const RifleResult fit = fit_rifle(prob.pair, k, flags.options(), flags.seed);
  out.update(fit_json(fit));
  out["k"] = k;
  print(out);
  return 0;
}

void write_vector_csv(const std::filesystem::path& path, const Vector& v) { write_csv_matrix(path.string(), Matrix(v)); }

void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::InvalidArgument, "cannot write " + path.string());
  for (int l : labels) out << l << '\n';
}

int run_simulate(const std::string& scenario, std::size_t d, std::size_t n, std::size_t n_test, std::size_t s,
                 double lambda1, std::size_t slices, std::uint64_t seed, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  RngState rng = rng_substream(seed, 0);
  json manifest = {{"scenario", scenario}, {"d", d}, {"seed", seed}, {"version", kVersion}};
  json files = json::object();

  if (scenario == "fda-binary" || scenario == "fda-multiclass") {
    const FDAPopulation pop = scenario == "fda-binary" ? fda_population_binary(d) : fda_population_multiclass(d);
    const auto classes = static_cast<std::size_t>(pop.num_classes());
    if (n % classes != 0 || n_test % classes != 0)
      throw Error(Errc::Indivisible, "n and n_test must be multiples of " + std::to_string(classes));
    const LabeledDataset train = sample_labeled(pop, n / classes, rng);
    write_csv_matrix((dir / "x.csv").string(), train.x);
    write_labels_csv(dir / "labels.csv", train.labels);
    files["x"] = "x.csv";
    files["labels"] = "labels.csv";
    if (n_test > 0) {
      const LabeledDataset test = sample_labeled(pop, n_test / classes, rng);
      write_csv_matrix((dir / "test_x.csv").string(), test.x);
      write_labels_csv(dir / "test_labels.csv", test.labels);
      files["test_x"] = "test_x.csv";
      files["test_labels"] = "test_labels.csv";
    }
    write_csv_matrix((dir / "sigma.csv").string(), pop.sigma.matrix());
    write_csv_matrix((dir / "sigma_b.csv").string(), pop.sigma_b.matrix());
    write_vector_csv(dir / "v_star.csv", pop.v_star);
    files["sigma"] = "sigma.csv";
    files["sigma_b"] = "sigma_b.csv";
    files["v_star"] = "v_star.csv";
    manifest["n"] = n;
    manifest["n_test"] = n_test;
    manifest["classes"] = classes;
    manifest["oracle_support_size"] = thresholded_support(pop.v_star).size();
  } else if (scenario == "cca") {
    const CCAPopulation pop = cca_population(d);
    const PairedDataset data = sample_paired(pop, n, rng);
    write_csv_matrix((dir / "x.csv").string(), data.x);
    write_csv_matrix((dir / "y.csv").string(), data.y);
    write_csv_matrix((dir / "sigma.csv").string(), pop.sigma.matrix());
    write_vector_csv(dir / "vx_star.csv", pop.vx_star);
    write_vector_csv(dir / "vy_star.csv", pop.vy_star);
    files = {{"x", "x.csv"}, {"y", "y.csv"}, {"sigma", "sigma.csv"}, {"vx_star", "vx_star.csv"},
             {"vy_star", "vy_star.csv"}};
    manifest["n"] = n;
    manifest["lambda1"] = pop.lambda1;
  } else if (scenario == "sir") {
    const SIRPopulation pop = sir_population(d, s);
    const SlicedDataset data = sample_sliced(pop, n, slices, rng);
    write_csv_matrix((dir / "x.csv").string(), data.x);
    const auto& y = std::get<std::vector<double>>(data.response);
    write_vector_csv(dir / "y.csv", Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size())));
    write_csv_matrix((dir / "sigma.csv").string(), pop.sigma.matrix());
    write_vector_csv(dir / "beta.csv", pop.beta);
    files = {{"x", "x.csv"}, {"y", "y.csv"}, {"sigma", "sigma.csv"}, {"beta", "beta.csv"}};
    manifest["n"] = n;
    manifest["s"] = s;
    manifest["slices"] = slices;
    manifest["noise"] = pop.noise;
  } else if (scenario == "planted") {
    const PlantedGEP g = gen_planted_gep(d, s, lambda1, rng);
    write_csv_matrix((dir / "a.csv").string(), g.pair.a.matrix());
    write_csv_matrix((dir / "b.csv").string(), g.pair.b.matrix());
    write_vector_csv(dir / "w.csv", g.w);
    files = {{"a", "a.csv"}, {"b", "b.csv"}, {"w", "w.csv"}};
    manifest["s"] = s;
    manifest["lambda1"] = lambda1;
  } else {
    throw Error(Errc::InvalidArgument, "unknown scenario '" + scenario + "'");
  }
  manifest["files"] = files;
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  print({{"output", out_dir}, {"files", files}});
  return 0;
}

int run_bench(const std::string& spec_path, bool full, const std::string& output) {
  const ExperimentSpec spec = load_experiment_spec(spec_path, full);
  const std::string prefix = output.empty() ? spec.output : output;
  if (prefix.empty()) throw Error(Errc::InvalidArgument, "no output path in spec and no --output given");
  const ExperimentReport report = run_experiment(spec);
  write_report(report, prefix);
  json out = report_summary(report);
  out["csv"] = prefix + ".csv";
  out["json"] = prefix + ".json";
  print(out);
  return 0;
}

int run_diagnose(const std::string& a, const std::string& b, const std::string& ea, const std::string& eb,
                 std::size_t s, std::optional<std::size_t> k, std::optional<double> eta, double const_a,
                 double const_c) {
  const LoadedPair loaded = load_pair_csv(a, b);
  const std::size_t d = loaded.pair.dim();
  std::vector<std::string> warnings = loaded.warnings;
  auto load_perturbation = [&](const std::string& path) {
    if (path.empty()) return SymMatrix(Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
    SymMatrix e = load_symmetric(path, warnings);
    if (e.dim() != d) throw Error(Errc::DimMismatch, path + " does not match the pair dimension");
    return e;
  };
  const SymMatrix e_a = load_perturbation(ea);
  const SymMatrix e_b = load_perturbation(eb);
  const std::size_t kk = k.value_or(s);
  const double step = eta ? *eta : default_step_size(loaded.pair.b);
  TheoremConstants constants;
  constants.a = const_a;
  constants.c = const_c;
  const TheoremQuantities q = theorem1_quantities(loaded.pair, e_a, e_b, s, kk, step, constants);
  print({{"s", q.s},
         {"k", q.k},
         {"k_prime", q.k_prime},
         {"eta", q.eta},
         {"lambda1", q.lambda1},
         {"lambda2", q.lambda2},
         {"cr", q.cr_k},
         {"epsilon", q.eps_k},
         {"eigengap", q.delta_lambda},
         {"gamma", q.gamma},
         {"omega", q.omega_k},
         {"theta", q.theta},
         {"nu", q.nu},
         {"a", q.a},
         {"b", q.b},
         {"c", q.c},
         {"c_lower", q.c_lower},
         {"c_upper", q.c_upper},
         {"kappa_b", q.kappa_b},
         {"lambda_max_b", q.lambda_max_b},
         {"lambda_min_b", q.lambda_min_b},
         {"gap_violated", q.gap_violated},
         {"warnings", warnings}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse generalized eigenvalue problems by truncated Rayleigh flow"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  FitFlags flags;

  auto* solve = app.add_subcommand("solve", "solve a sparse GEP for a pair of CSV matrices");
  std::string a_path;
  std::string b_path;
  std::size_t k = 0;
  solve->add_option("--a", a_path, "symmetric matrix A (CSV)")->required()->check(CLI::ExistingFile);
  solve->add_option("--b", b_path, "positive definite matrix B (CSV)")->required()->check(CLI::ExistingFile);
  solve->add_option("--k", k, "truncation level")->required()->check(CLI::PositiveNumber);
  flags.add(solve, false);

  std::vector<std::size_t> k_grid;
  auto add_grid = [&](CLI::App* cmd) {
    cmd->add_option("--k", k_grid, "truncation level, or a list to choose by cross-validation")
        ->required()
        ->delimiter(',');
  };

  auto* fda = app.add_subcommand("fda", "sparse Fisher discriminant analysis");
  std::string x_path;
  std::string labels_path;
  std::string test_path;
  std::string test_labels_path;
  bool diagonal = false;
  fda->add_option("--x", x_path, "training features (CSV, rows are samples)")->required()->check(CLI::ExistingFile);
  fda->add_option("--labels", labels_path, "training labels 0..K-1 (CSV column)")->required()->check(CLI::ExistingFile);
  fda->add_option("--test", test_path, "test features to classify")->check(CLI::ExistingFile);
  fda->add_option("--test-labels", test_labels_path, "test labels for a misclassification count")
      ->check(CLI::ExistingFile);
  fda->add_flag("--diagonal-within", diagonal, "replace the within-class scatter by its diagonal");
  add_grid(fda);
  flags.add(fda, true);

  auto* cca = app.add_subcommand("cca", "sparse canonical correlation analysis");
  std::string y_path;
  cca->add_option("--x", x_path, "first view (CSV)")->required()->check(CLI::ExistingFile);
  cca->add_option("--y", y_path, "second view (CSV)")->required()->check(CLI::ExistingFile);
  add_grid(cca);
  flags.add(cca, true);

  auto* sir = app.add_subcommand("sir", "sparse sliced inverse regression");
  std::size_t slices = 5;
  bool categorical = false;
  sir->add_option("--x", x_path, "predictors (CSV)")->required()->check(CLI::ExistingFile);
  sir->add_option("--y", y_path, "response (CSV column)")->required()->check(CLI::ExistingFile);
  sir->add_option("--slices", slices, "number of slices");
  sir->add_flag("--categorical", categorical, "response values are slice ids 0..slices-1");
  add_grid(sir);
  flags.add(sir, true);

  auto* simulate = app.add_subcommand("simulate", "write a simulated scenario as CSV files and a manifest");
  std::string scenario;
  std::size_t d = 0;
  std::size_t n = 100;
  std::size_t n_test = 0;
  std::size_t s = 5;
  double lambda1 = 2.0;
  std::uint64_t sim_seed = 0;
  std::string out_dir;
  simulate->add_option("--scenario", scenario, "fda-binary, fda-multiclass, cca, sir or planted")->required();
  simulate->add_option("--d", d, "dimension")->required();
  simulate->add_option("--n", n, "sample size");
  simulate->add_option("--n-test", n_test, "test sample size (FDA)");
  simulate->add_option("--s", s, "sparsity (sir, planted)");
  simulate->add_option("--lambda1", lambda1, "leading eigenvalue (planted)");
  simulate->add_option("--slices", slices, "slices (sir)");
  simulate->add_option("--seed", sim_seed, "seed");
  simulate->add_option("--out", out_dir, "output directory")->required();

  auto* bench = app.add_subcommand("bench", "run an experiment spec");
  std::string spec_path;
  bool full = false;
  std::string output;
  bench->add_option("--spec", spec_path, "experiment spec (JSON)")->required()->check(CLI::ExistingFile);
  bench->add_flag("--full", full, "apply the spec's large-scale 'full' section (hours of runtime)");
  bench->add_option("--output", output, "output prefix; overrides the spec");

  auto* diagnose = app.add_subcommand("diagnose", "theorem quantities for a small pair");
  std::string ea_path;
  std::string eb_path;
  std::size_t diag_s = 1;
  std::optional<std::size_t> diag_k;
  std::optional<double> diag_eta;
  double const_a = 0.05;
  double const_c = 0.05;
  diagnose->add_option("--a", a_path, "population A (CSV)")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--b", b_path, "population B (CSV)")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--ea", ea_path, "perturbation of A (default zero)")->check(CLI::ExistingFile);
  diagnose->add_option("--eb", eb_path, "perturbation of B (default zero)")->check(CLI::ExistingFile);
  diagnose->add_option("--s", diag_s, "sparsity of the target");
  diagnose->add_option("--k", diag_k, "truncation level (default s)");
  diagnose->add_option("--eta", diag_eta, "step size (default 1/(2.1 lambda_max(B)))");
  diagnose->add_option("--const-a", const_a, "eigengap constant a in [0,1)");
  diagnose->add_option("--const-c", const_c, "constant c in [0,1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*solve) return run_solve(a_path, b_path, k, flags);
    if (*fda) return run_fda(x_path, labels_path, test_path, test_labels_path, k_grid, diagonal, flags);
    if (*cca) return run_cca(x_path, y_path, k_grid, flags);
    if (*sir) return run_sir(x_path, y_path, slices, categorical, k_grid, flags);
    if (*simulate) return run_simulate(scenario, d, n, n_test, s, lambda1, slices, sim_seed, out_dir);
    if (*bench) return run_bench(spec_path, full, output);
    if (*diagnose) return run_diagnose(a_path, b_path, ea_path, eb_path, diag_s, diag_k, diag_eta, const_a, const_c);
  } catch (const Error& e) {
    std::cerr << "rifle: " << e.what() << '\n';
    return is_numerical(e.code()) ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "rifle: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
