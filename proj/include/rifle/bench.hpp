#pragma once

// Cross-validation over the truncation level and the seeded experiment
// harness behind `rifle bench`.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rifle/io.hpp"
#include "rifle/sim.hpp"
#include "rifle/solver.hpp"
#include "rifle/stat_models.hpp"

namespace rifle {

#ifdef RIFLE_VERSION
inline constexpr const char* kVersion = RIFLE_VERSION;
#else
inline constexpr const char* kVersion = "0.0.0";
#endif

struct FitOptions {
  std::optional<double> eta;
  int max_iter = 2000;
  double tol = 1e-10;
  bool warm_start = true;
  std::vector<std::size_t> schedule;  // explicit levels; empty means default_schedule
};

/// Warm-start schedule for target k. Explicit levels above k are kept and k
/// is appended when missing.
inline WarmStartSchedule fit_schedule(const FitOptions& opts, std::size_t d, std::size_t k) {
  if (!opts.warm_start) return WarmStartSchedule({k});
  if (opts.schedule.empty()) return default_schedule(d, k);
  std::vector<std::size_t> levels;
  for (std::size_t level : opts.schedule)
    if (level > k) levels.push_back(std::min(level, d));
  std::sort(levels.begin(), levels.end(), std::greater<>());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  levels.erase(std::remove_if(levels.begin(), levels.end(), [&](std::size_t l) { return l <= k; }), levels.end());
  levels.push_back(k);
  return WarmStartSchedule(std::move(levels));
}

inline RifleResult fit_rifle(const MatrixPair& pair, std::size_t k, const FitOptions& opts, std::uint64_t init_seed) {
  RifleConfig cfg;
  cfg.k = k;
  cfg.eta = opts.eta;
  cfg.max_iter = opts.max_iter;
  cfg.tol = opts.tol;
  cfg.init = RandomInit{init_seed};
  if (k < 1 || k > pair.dim())
    throw Error(Errc::InvalidArgument, "k = " + std::to_string(k) + " outside 1.." + std::to_string(pair.dim()));
  return rifle_warm_start(pair, cfg, fit_schedule(opts, pair.dim(), k));
}

// ---------------------------------------------------------------- CV

struct CVResult {
  std::vector<std::size_t> k_grid;
  std::vector<std::vector<double>> fold_scores;  // [grid index][fold]
  std::vector<double> mean_scores;
  std::size_t selected_k = 0;
  bool higher_is_better = false;
};

/// Fold id per sample; within each class the samples are shuffled and dealt
/// round-robin, continuing the deal across classes.
inline std::vector<std::size_t> stratified_folds(const std::vector<int>& labels, std::size_t folds, RngState& rng) {
  if (folds < 2) throw Error(Errc::InvalidArgument, "need at least two folds");
  if (labels.size() < folds)
    throw Error(Errc::TooFewSamples, std::to_string(labels.size()) + " samples for " + std::to_string(folds) + " folds");
  const int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> fold(labels.size());
  std::size_t dealt = 0;
  for (int c = 0; c < classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) members.push_back(i);
    rng.shuffle(members);
    for (std::size_t i : members) fold[i] = dealt++ % folds;
  }
  return fold;
}

inline std::vector<std::size_t> random_folds(std::size_t n, std::size_t folds, RngState& rng) {
  return stratified_folds(std::vector<int>(n, 0), folds, rng);
}

/// Index into k_grid of the best mean score; ties go to the smaller k.
inline std::size_t best_grid_index(const std::vector<std::size_t>& k_grid, const std::vector<double>& mean_scores,
                                   bool higher_is_better) {
  std::size_t best = 0;
  for (std::size_t g = 1; g < k_grid.size(); ++g) {
    const double a = mean_scores[g];
    const double b = mean_scores[best];
    const bool better = higher_is_better ? a > b : a < b;
    if (better || (a == b && k_grid[g] < k_grid[best])) best = g;
  }
  return best;
}

namespace detail {

inline void check_grid(const std::vector<std::size_t>& k_grid, std::size_t d) {
  if (k_grid.empty()) throw Error(Errc::InvalidArgument, "k grid is empty");
  for (std::size_t k : k_grid)
    if (k < 1 || k > d) throw Error(Errc::InvalidArgument, "grid value k = " + std::to_string(k) + " outside 1.." + std::to_string(d));
}

inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(const std::vector<std::size_t>& fold,
                                                                                 std::size_t f) {
  std::vector<std::size_t> train;
  std::vector<std::size_t> held;
  for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? held : train).push_back(i);
  return {train, held};
}

// score(train_rows, held_rows, k, init_seed) for each fold and grid value
template <class Score>
CVResult run_cv(const std::vector<std::size_t>& k_grid, const std::vector<std::size_t>& fold, std::size_t folds,
                bool higher_is_better, RngState& rng, Score&& score) {
  CVResult out;
  out.k_grid = k_grid;
  out.higher_is_better = higher_is_better;
  out.fold_scores.assign(k_grid.size(), std::vector<double>(folds, 0.0));
  for (std::size_t f = 0; f < folds; ++f) {
    const auto [train, held] = split_rows(fold, f);
    const std::uint64_t init_seed = rng.next_u64();
    for (std::size_t g = 0; g < k_grid.size(); ++g) out.fold_scores[g][f] = score(train, held, k_grid[g], init_seed);
  }
  for (const auto& scores : out.fold_scores) {
    double sum = 0.0;
    for (double s : scores) sum += s;
    out.mean_scores.push_back(sum / static_cast<double>(folds));
  }
  out.selected_k = k_grid[best_grid_index(k_grid, out.mean_scores, higher_is_better)];
  return out;
}

}  // namespace detail

/// FDA: stratified folds, score = held-out misclassification count.
inline CVResult cross_validate_k(const LabeledDataset& data, const std::vector<std::size_t>& k_grid, std::size_t folds,
                                 RngState& rng, const FitOptions& opts = {}, bool diagonal_within = false) {
  detail::check_grid(k_grid, data.d());
  const std::vector<std::size_t> fold = stratified_folds(data.labels, folds, rng);
  return detail::run_cv(k_grid, fold, folds, false, rng,
                        [&](const auto& train_rows, const auto& held_rows, std::size_t k, std::uint64_t seed) {
                          const LabeledDataset train = data.subset(train_rows);
                          const LabeledDataset held = data.subset(held_rows);
                          const GEPProblem prob = fda_build(train, diagonal_within);
                          const RifleResult fit = fit_rifle(prob.pair, k, opts, seed);
                          return static_cast<double>(count_mismatches(fda_classify(fit.v, train, held.x), held.labels));
                        });
}

/// CCA: random folds, score = |u_x^T Sxy(held) u_y| with unit-norm halves,
/// maximized. A fit with an empty half scores 0.
inline CVResult cross_validate_k(const PairedDataset& data, const std::vector<std::size_t>& k_grid, std::size_t folds,
                                 RngState& rng, const FitOptions& opts = {}) {
  detail::check_grid(k_grid, static_cast<std::size_t>(data.x.cols() + data.y.cols()));
  const std::vector<std::size_t> fold = random_folds(data.n(), folds, rng);
  return detail::run_cv(k_grid, fold, folds, true, rng,
                        [&](const auto& train_rows, const auto& held_rows, std::size_t k, std::uint64_t seed) {
                          const PairedDataset train = data.subset(train_rows);
                          const PairedDataset held = data.subset(held_rows);
                          const GEPProblem prob = cca_build(train);
                          const RifleResult fit = fit_rifle(prob.pair, k, opts, seed);
                          const CanonicalPair cp = cca_split(fit.v, prob.meta);
                          if (cp.x_zero || cp.y_zero) return 0.0;
                          const Matrix sxy = detail::cross_covariance(held.x, held.y);
                          return std::abs(cp.x.dot(sxy * cp.y));
                        });
}

/// SIR: folds stratified by slice; the held-out rows are classified into
/// slices by nearest projected slice centroid, score = mismatches.
inline CVResult cross_validate_k(const SlicedDataset& data, const std::vector<std::size_t>& k_grid, std::size_t folds,
                                 RngState& rng, const FitOptions& opts = {}) {
  detail::check_grid(k_grid, static_cast<std::size_t>(data.x.cols()));
  const std::vector<std::size_t> slice = assign_slices(data);
  std::vector<int> slice_labels(slice.begin(), slice.end());
  const std::vector<std::size_t> fold = stratified_folds(slice_labels, folds, rng);
  const LabeledDataset as_labeled(data.x, slice_labels, static_cast<int>(data.slices));
  return detail::run_cv(k_grid, fold, folds, false, rng,
                        [&](const auto& train_rows, const auto& held_rows, std::size_t k, std::uint64_t seed) {
                          const LabeledDataset train = as_labeled.subset(train_rows);
                          const LabeledDataset held = as_labeled.subset(held_rows);
                          std::vector<int> categorical = train.labels;
                          const SlicedDataset train_sliced{train.x, std::move(categorical), data.slices};
                          const GEPProblem prob = sir_build(train_sliced);
                          const RifleResult fit = fit_rifle(prob.pair, k, opts, seed);
                          return static_cast<double>(count_mismatches(fda_classify(fit.v, train, held.x), held.labels));
                        });
}

// ---------------------------------------------------------------- specs

enum class Scenario { FdaBinary, FdaMulticlass, Cca, Sir, Planted, CustomPair };

inline std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::FdaBinary: return "fda-binary";
    case Scenario::FdaMulticlass: return "fda-multiclass";
    case Scenario::Cca: return "cca";
    case Scenario::Sir: return "sir";
    case Scenario::Planted: return "planted";
    case Scenario::CustomPair: return "custom-pair";
  }
  return "unknown";
}

struct ExperimentSpec {
  Scenario scenario = Scenario::Planted;
  std::size_t d = 0;
  std::vector<std::size_t> n_grid;  // resolved sample sizes; {0} when unused
  std::vector<double> scaled_n;     // n / (s log d) when given that way
  std::size_t n_test = 0;
  std::size_t s = 5;
  double lambda1 = 2.0;
  std::size_t slices = 5;
  std::vector<std::size_t> k_grid;
  std::size_t cv_folds = 5;
  FitOptions fit;
  std::size_t replications = 1;
  std::uint64_t seed = 0;
  std::string output;
  bool ablation = false;
  std::string pair_a;
  std::string pair_b;
  std::string truth;
  nlohmann::json document;  // effective spec, hashed for provenance
};

/// 64-bit FNV-1a of the canonical dump (object keys sorted).
inline std::string spec_hash(const nlohmann::json& doc) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline const std::vector<std::string>& known_spec_keys() {
  static const std::vector<std::string> keys = {
      "scenario", "d",      "n",     "n_grid",  "scaled_n", "n_test", "s",        "lambda1", "slices", "solver",
      "replications", "seed", "output", "ablation", "a",     "b",      "truth",   "full",    "description"};
  return keys;
}

inline std::size_t spec_size(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw Error(Errc::InvalidArgument, "spec field '" + key + "' must be a nonnegative integer");
  return j.get<std::size_t>();
}

inline std::vector<std::size_t> size_list(const nlohmann::json& j, const std::string& key) {
  std::vector<std::size_t> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(spec_size(e, key));
  } else {
    out.push_back(spec_size(j, key));
  }
  if (out.empty()) throw Error(Errc::InvalidArgument, "spec field '" + key + "' is empty");
  return out;
}

inline Scenario parse_scenario(const std::string& name) {
  for (Scenario s : {Scenario::FdaBinary, Scenario::FdaMulticlass, Scenario::Cca, Scenario::Sir, Scenario::Planted,
                     Scenario::CustomPair})
    if (scenario_name(s) == name) return s;
  throw Error(Errc::InvalidArgument, "unknown scenario '" + name + "'");
}

}  // namespace detail

/// Reads an experiment spec. With full = true the object under "full" is
/// merged over the top level first.
inline ExperimentSpec parse_experiment_spec(nlohmann::json doc, bool full = false) {
  using detail::spec_size;
  if (!doc.is_object()) throw Error(Errc::InvalidArgument, "spec must be a JSON object");
  if (full) {
    if (!doc.contains("full") || !doc["full"].is_object())
      throw Error(Errc::InvalidArgument, "spec has no 'full' section");
    nlohmann::json patch = doc["full"];
    doc.erase("full");
    doc.merge_patch(patch);
  }
  for (const auto& item : doc.items()) {
    const auto& keys = detail::known_spec_keys();
    if (std::find(keys.begin(), keys.end(), item.key()) == keys.end())
      throw Error(Errc::InvalidArgument, "unknown spec field '" + item.key() + "'");
  }

  ExperimentSpec spec;
  try {
    if (!doc.contains("scenario")) throw Error(Errc::InvalidArgument, "spec needs 'scenario'");
    spec.scenario = detail::parse_scenario(doc.at("scenario").get<std::string>());
    if (doc.contains("d")) spec.d = spec_size(doc["d"], "d");
    if (doc.contains("s")) spec.s = spec_size(doc["s"], "s");
    if (doc.contains("n_test")) spec.n_test = spec_size(doc["n_test"], "n_test");
    if (doc.contains("lambda1")) spec.lambda1 = doc["lambda1"].get<double>();
    if (doc.contains("slices")) spec.slices = spec_size(doc["slices"], "slices");
    if (doc.contains("replications")) spec.replications = spec_size(doc["replications"], "replications");
    if (doc.contains("seed")) {
      if (!doc["seed"].is_number_unsigned()) throw Error(Errc::InvalidArgument, "seed must be a nonnegative integer");
      spec.seed = doc["seed"].get<std::uint64_t>();
    }
    if (doc.contains("output")) spec.output = doc["output"].get<std::string>();
    if (doc.contains("ablation")) spec.ablation = doc["ablation"].get<bool>();
    if (doc.contains("a")) spec.pair_a = doc["a"].get<std::string>();
    if (doc.contains("b")) spec.pair_b = doc["b"].get<std::string>();
    if (doc.contains("truth")) spec.truth = doc["truth"].get<std::string>();

    const int sample_keys = doc.contains("n") + doc.contains("n_grid") + doc.contains("scaled_n");
    if (sample_keys > 1) throw Error(Errc::InvalidArgument, "give only one of 'n', 'n_grid', 'scaled_n'");
    if (doc.contains("n")) spec.n_grid = {spec_size(doc["n"], "n")};
    if (doc.contains("n_grid")) spec.n_grid = detail::size_list(doc["n_grid"], "n_grid");
    if (doc.contains("scaled_n")) {
      const auto& arr = doc["scaled_n"];
      if (!arr.is_array() || arr.empty()) throw Error(Errc::InvalidArgument, "'scaled_n' must be a nonempty array");
      for (const auto& c : arr) spec.scaled_n.push_back(c.get<double>());
    }

    const nlohmann::json solver = doc.value("solver", nlohmann::json::object());
    if (!solver.is_object()) throw Error(Errc::InvalidArgument, "'solver' must be an object");
    for (const auto& item : solver.items()) {
      static const std::vector<std::string> keys = {"k", "eta", "schedule", "max_iter", "tol", "cv_folds"};
      if (std::find(keys.begin(), keys.end(), item.key()) == keys.end())
        throw Error(Errc::InvalidArgument, "unknown solver field '" + item.key() + "'");
    }
    if (!solver.contains("k")) throw Error(Errc::InvalidArgument, "solver needs 'k'");
    spec.k_grid = detail::size_list(solver["k"], "solver.k");
    if (solver.contains("eta")) spec.fit.eta = solver["eta"].get<double>();
    if (solver.contains("max_iter")) spec.fit.max_iter = static_cast<int>(spec_size(solver["max_iter"], "max_iter"));
    if (solver.contains("tol")) spec.fit.tol = solver["tol"].get<double>();
    if (solver.contains("cv_folds")) spec.cv_folds = spec_size(solver["cv_folds"], "cv_folds");
    if (solver.contains("schedule")) {
      const auto& sch = solver["schedule"];
      if (sch.is_string()) {
        const auto name = sch.get<std::string>();
        if (name == "none") {
          spec.fit.warm_start = false;
        } else if (name != "default") {
          throw Error(Errc::InvalidArgument, "schedule must be 'default', 'none' or a list");
        }
      } else {
        spec.fit.schedule = detail::size_list(sch, "schedule");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("spec: ") + e.what());
  }

  // validation
  if (spec.replications < 1) throw Error(Errc::InvalidArgument, "replications must be at least 1");
  if (spec.fit.eta && !(*spec.fit.eta > 0.0)) throw Error(Errc::InvalidArgument, "eta must be positive");
  if (!(spec.fit.tol >= 0.0)) throw Error(Errc::InvalidArgument, "tol must be nonnegative");
  if (spec.cv_folds < 2) throw Error(Errc::InvalidArgument, "cv_folds must be at least 2");
  for (std::size_t k : spec.k_grid)
    if (k == 0) throw Error(Errc::InvalidArgument, "k must be positive");

  const bool needs_n = spec.scenario != Scenario::Planted && spec.scenario != Scenario::CustomPair;
  if (spec.scenario == Scenario::CustomPair) {
    if (spec.pair_a.empty() || spec.pair_b.empty())
      throw Error(Errc::InvalidArgument, "custom-pair needs 'a' and 'b' paths");
    if (spec.k_grid.size() != 1) throw Error(Errc::InvalidArgument, "custom-pair takes a single k");
  } else if (spec.d == 0) {
    throw Error(Errc::InvalidArgument, "spec needs 'd'");
  }
  if (spec.scenario == Scenario::Cca && spec.s != 5)
    throw Error(Errc::InvalidArgument, "the CCA design has s = 5");
  if (needs_n) {
    if (!spec.scaled_n.empty()) {
      spec.n_grid.clear();
      for (double c : spec.scaled_n) {
        if (!(c > 0.0)) throw Error(Errc::InvalidArgument, "scaled_n values must be positive");
        spec.n_grid.push_back(static_cast<std::size_t>(
            std::llround(c * static_cast<double>(spec.s) * std::log(static_cast<double>(spec.d)))));
      }
    }
    if (spec.n_grid.empty()) throw Error(Errc::InvalidArgument, "spec needs 'n', 'n_grid' or 'scaled_n'");
    for (std::size_t n : spec.n_grid)
      if (n == 0) throw Error(Errc::InvalidArgument, "sample sizes must be positive");
  } else {
    if (!spec.n_grid.empty() || !spec.scaled_n.empty())
      throw Error(Errc::InvalidArgument, scenario_name(spec.scenario) + " takes no sample size");
    spec.n_grid = {0};
  }
  if (spec.scenario == Scenario::FdaBinary || spec.scenario == Scenario::FdaMulticlass) {
    const std::size_t classes = spec.scenario == Scenario::FdaBinary ? 2 : 4;
    if (spec.n_test == 0) throw Error(Errc::InvalidArgument, "FDA scenarios need 'n_test'");
    for (std::size_t n : spec.n_grid)
      if (n % classes != 0)
        throw Error(Errc::Indivisible, "n = " + std::to_string(n) + " is not a multiple of " + std::to_string(classes));
    if (spec.n_test % classes != 0) throw Error(Errc::Indivisible, "n_test is not a multiple of the class count");
  }
  if (spec.ablation && spec.scenario != Scenario::FdaBinary && spec.scenario != Scenario::FdaMulticlass)
    throw Error(Errc::InvalidArgument, "the diagonal-within ablation applies to FDA scenarios only");
  if (spec.scenario == Scenario::Planted && spec.k_grid.size() != 1)
    throw Error(Errc::InvalidArgument, "planted scenario takes a single k");

  spec.document = std::move(doc);
  return spec;
}

inline ExperimentSpec load_experiment_spec(const std::string& path, bool full = false) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path + ": " + e.what());
  }
  ExperimentSpec spec = parse_experiment_spec(std::move(doc), full);
  // relative data paths resolve against the spec's directory
  const auto base = std::filesystem::path(path).parent_path();
  for (std::string* p : {&spec.pair_a, &spec.pair_b, &spec.truth})
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
  return spec;
}

// ---------------------------------------------------------------- harness

struct ReplicateRow {
  std::size_t replicate = 0;
  std::size_t grid_index = 0;
  std::size_t n = 0;
  bool ok = true;
  std::map<std::string, double> metrics;
  std::string message;
};

struct MetricSummary {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

struct Aggregate {
  std::size_t n = 0;
  std::size_t rows = 0;
  std::size_t failures = 0;
  std::map<std::string, MetricSummary> metrics;
};

struct ExperimentReport {
  Scenario scenario = Scenario::Planted;
  std::vector<std::string> columns;
  std::vector<ReplicateRow> rows;  // ordered by replicate, then grid index
  std::vector<Aggregate> aggregates;  // one per grid point
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
  std::string spec_hash;
  std::string version = kVersion;
};

inline std::vector<std::string> report_columns(const ExperimentSpec& spec) {
  std::vector<std::string> cols = {"k", "selected_features", "iterations", "converged", "rho"};
  switch (spec.scenario) {
    case Scenario::FdaBinary:
    case Scenario::FdaMulticlass:
      cols.insert(cols.end(), {"misclassified", "test_error", "direction_error", "oracle_misclassified"});
      if (spec.ablation) cols.insert(cols.end(), {"ablation_k", "ablation_features", "ablation_misclassified"});
      break;
    case Scenario::Cca:
      cols.insert(cols.end(), {"direction_error", "direction_error_x", "direction_error_y"});
      break;
    case Scenario::Sir:
    case Scenario::Planted:
      cols.push_back("direction_error");
      break;
    case Scenario::CustomPair:
      if (!spec.truth.empty()) cols.push_back("direction_error");
      break;
  }
  return cols;
}

/// Mean and sd / sqrt(m) over the successful rows of each grid point.
inline std::vector<Aggregate> aggregate_rows(const std::vector<ReplicateRow>& rows, const std::vector<std::size_t>& n_grid,
                                             const std::vector<std::string>& columns) {
  std::vector<Aggregate> out(n_grid.size());
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    Aggregate& agg = out[g];
    agg.n = n_grid[g];
    std::map<std::string, std::vector<double>> values;
    for (const ReplicateRow& row : rows) {
      if (row.grid_index != g) continue;
      ++agg.rows;
      if (!row.ok) {
        ++agg.failures;
        continue;
      }
      for (const auto& [name, value] : row.metrics) values[name].push_back(value);
    }
    for (const std::string& name : columns) {
      const auto it = values.find(name);
      if (it == values.end()) continue;
      const std::vector<double>& v = it->second;
      MetricSummary m;
      m.count = v.size();
      double sum = 0.0;
      for (double x : v) sum += x;
      m.mean = sum / static_cast<double>(v.size());
      if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.se = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
      }
      agg.metrics[name] = m;
    }
  }
  return out;
}

/// RIFLE_THREADS when set to a positive integer, else the hardware count.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("RIFLE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

namespace detail {

// Shared per-experiment state built once before the workers start.
struct ExperimentContext {
  std::optional<FDAPopulation> fda;
  std::optional<CCAPopulation> cca;
  std::optional<SIRPopulation> sir;
  std::optional<MatrixPair> custom;
  std::optional<Vector> truth;
};

inline std::size_t choose_k(const ExperimentSpec& spec, const auto& data, RngState& rng) {
  if (spec.k_grid.size() == 1) return spec.k_grid.front();
  return cross_validate_k(data, spec.k_grid, spec.cv_folds, rng, spec.fit).selected_k;
}

inline void record_fit(ReplicateRow& row, std::size_t k, const RifleResult& fit) {
  row.metrics["k"] = static_cast<double>(k);
  row.metrics["selected_features"] = static_cast<double>(thresholded_support(fit.v).size());
  row.metrics["iterations"] = fit.iterations;
  row.metrics["converged"] = fit.converged ? 1.0 : 0.0;
  row.metrics["rho"] = fit.rho;
}

inline void run_fda(const ExperimentSpec& spec, const FDAPopulation& pop, std::size_t n, RngState& rng,
                    ReplicateRow& row) {
  const auto classes = static_cast<std::size_t>(pop.num_classes());
  const LabeledDataset train = sample_labeled(pop, n / classes, rng);
  const LabeledDataset test = sample_labeled(pop, spec.n_test / classes, rng);
  const std::size_t k = choose_k(spec, train, rng);
  const GEPProblem prob = fda_build(train);
  const RifleResult fit = fit_rifle(prob.pair, k, spec.fit, rng.next_u64());
  record_fit(row, k, fit);
  const std::size_t miss = count_mismatches(fda_classify(fit.v, train, test.x), test.labels);
  row.metrics["misclassified"] = static_cast<double>(miss);
  row.metrics["test_error"] = static_cast<double>(miss) / static_cast<double>(test.n());
  row.metrics["direction_error"] = direction_error(fit.v, pop.v_star);
  row.metrics["oracle_misclassified"] =
      static_cast<double>(count_mismatches(fda_classify(pop.v_star, train, test.x), test.labels));
  if (spec.ablation) {
    std::size_t ak = spec.k_grid.front();
    if (spec.k_grid.size() > 1)
      ak = cross_validate_k(train, spec.k_grid, spec.cv_folds, rng, spec.fit, true).selected_k;
    const GEPProblem diag = fda_build(train, true);
    const RifleResult afit = fit_rifle(diag.pair, ak, spec.fit, rng.next_u64());
    row.metrics["ablation_k"] = static_cast<double>(ak);
    row.metrics["ablation_features"] = static_cast<double>(thresholded_support(afit.v).size());
    row.metrics["ablation_misclassified"] =
        static_cast<double>(count_mismatches(fda_classify(afit.v, train, test.x), test.labels));
  }
}

inline void run_cca(const ExperimentSpec& spec, const CCAPopulation& pop, std::size_t n, RngState& rng,
                    ReplicateRow& row) {
  const PairedDataset data = sample_paired(pop, n, rng);
  const std::size_t k = choose_k(spec, data, rng);
  const GEPProblem prob = cca_build(data);
  const RifleResult fit = fit_rifle(prob.pair, k, spec.fit, rng.next_u64());
  record_fit(row, k, fit);
  const CanonicalPair cp = cca_split(fit.v, prob.meta);
  // an empty half has no direction; it is scored as the maximum error 2
  const double ex = cp.x_zero ? 2.0 : direction_error(cp.x, pop.vx_star);
  const double ey = cp.y_zero ? 2.0 : direction_error(cp.y, pop.vy_star);
  row.metrics["direction_error_x"] = ex;
  row.metrics["direction_error_y"] = ey;
  row.metrics["direction_error"] = 0.5 * (ex + ey);
}

inline void run_sir(const ExperimentSpec& spec, const SIRPopulation& pop, std::size_t n, RngState& rng,
                    ReplicateRow& row) {
  const SlicedDataset data = sample_sliced(pop, n, spec.slices, rng);
  const std::size_t k = choose_k(spec, data, rng);
  const GEPProblem prob = sir_build(data);
  const RifleResult fit = fit_rifle(prob.pair, k, spec.fit, rng.next_u64());
  record_fit(row, k, fit);
  row.metrics["direction_error"] = direction_error(fit.v, pop.beta);
}

inline void run_planted(const ExperimentSpec& spec, RngState& rng, ReplicateRow& row) {
  const PlantedGEP g = gen_planted_gep(spec.d, spec.s, spec.lambda1, rng);
  const std::size_t k = spec.k_grid.front();
  const RifleResult fit = fit_rifle(g.pair, k, spec.fit, rng.next_u64());
  record_fit(row, k, fit);
  row.metrics["direction_error"] = direction_error(fit.v, g.w);
}

inline void run_custom(const ExperimentSpec& spec, const ExperimentContext& ctx, RngState& rng, ReplicateRow& row) {
  const std::size_t k = spec.k_grid.front();
  const RifleResult fit = fit_rifle(*ctx.custom, k, spec.fit, rng.next_u64());
  record_fit(row, k, fit);
  if (ctx.truth) row.metrics["direction_error"] = direction_error(fit.v, *ctx.truth);
}

}  // namespace detail

/// Runs every (replicate, grid point) unit on a worker pool. Unit
/// u = replicate * |grid| + g draws from rng_substream(seed, u), so results
/// do not depend on scheduling. A unit that throws yields a failure row.
inline ExperimentReport run_experiment(const ExperimentSpec& spec) {
  ExperimentReport report;
  report.scenario = spec.scenario;
  report.columns = report_columns(spec);
  report.seed = spec.seed;
  report.spec_hash = spec_hash(spec.document);

  detail::ExperimentContext ctx;
  switch (spec.scenario) {
    case Scenario::FdaBinary: ctx.fda = fda_population_binary(spec.d); break;
    case Scenario::FdaMulticlass: ctx.fda = fda_population_multiclass(spec.d); break;
    case Scenario::Cca: ctx.cca = cca_population(spec.d); break;
    case Scenario::Sir: ctx.sir = sir_population(spec.d, spec.s); break;
    case Scenario::Planted:
      if (spec.s > spec.d) throw Error(Errc::InvalidArgument, "s exceeds d");
      break;
    case Scenario::CustomPair: {
      LoadedPair loaded = load_pair_csv(spec.pair_a, spec.pair_b);
      report.warnings = std::move(loaded.warnings);
      ctx.custom = std::move(loaded.pair);
      if (!spec.truth.empty()) {
        const std::vector<double> t = read_csv_vector(spec.truth);
        if (t.size() != ctx.custom->dim()) throw Error(Errc::DimMismatch, "truth length differs from pair dimension");
        ctx.truth = Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
      }
      break;
    }
  }

  const std::size_t grid = spec.n_grid.size();
  const std::size_t units = spec.replications * grid;
  std::vector<ReplicateRow> rows(units);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t u = next++; u < units; u = next++) {
      ReplicateRow& row = rows[u];
      row.replicate = u / grid;
      row.grid_index = u % grid;
      row.n = spec.n_grid[row.grid_index];
      RngState rng = rng_substream(spec.seed, u);
      try {
        switch (spec.scenario) {
          case Scenario::FdaBinary:
          case Scenario::FdaMulticlass: detail::run_fda(spec, *ctx.fda, row.n, rng, row); break;
          case Scenario::Cca: detail::run_cca(spec, *ctx.cca, row.n, rng, row); break;
          case Scenario::Sir: detail::run_sir(spec, *ctx.sir, row.n, rng, row); break;
          case Scenario::Planted: detail::run_planted(spec, rng, row); break;
          case Scenario::CustomPair: detail::run_custom(spec, ctx, rng, row); break;
        }
      } catch (const std::exception& e) {
        row.ok = false;
        row.metrics.clear();
        row.message = e.what();
      }
    }
  };
  const std::size_t threads = std::min(worker_count(), units);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  report.rows = std::move(rows);
  report.aggregates = aggregate_rows(report.rows, spec.n_grid, report.columns);
  return report;
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace detail

/// One line per row: replicate,n,status,<columns...>,message.
inline void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  out << "replicate,n,status";
  for (const auto& c : report.columns) out << ',' << c;
  out << ",message\n";
  for (const ReplicateRow& row : report.rows) {
    out << row.replicate << ',' << row.n << ',' << (row.ok ? "ok" : "failed");
    for (const auto& c : report.columns) {
      out << ',';
      if (const auto it = row.metrics.find(c); it != row.metrics.end()) out << format_double(it->second);
    }
    out << ',' << detail::csv_quote(row.message) << '\n';
  }
}

inline nlohmann::json report_summary(const ExperimentReport& report) {
  nlohmann::json j;
  j["version"] = report.version;
  j["spec_hash"] = report.spec_hash;
  j["seed"] = report.seed;
  j["scenario"] = scenario_name(report.scenario);
  j["columns"] = report.columns;
  j["warnings"] = report.warnings;
  std::size_t failures = 0;
  for (const auto& row : report.rows) failures += !row.ok;
  j["rows"] = report.rows.size();
  j["failures"] = failures;
  nlohmann::json aggs = nlohmann::json::array();
  for (const Aggregate& a : report.aggregates) {
    nlohmann::json ja;
    ja["n"] = a.n;
    ja["rows"] = a.rows;
    ja["failures"] = a.failures;
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [name, m] : a.metrics) metrics[name] = {{"mean", m.mean}, {"se", m.se}, {"count", m.count}};
    ja["metrics"] = std::move(metrics);
    aggs.push_back(std::move(ja));
  }
  j["aggregates"] = std::move(aggs);
  return j;
}

/// Writes <prefix>.csv and <prefix>.json, creating parent directories.
inline void write_report(const ExperimentReport& report, const std::string& prefix) {
  if (prefix.empty()) throw Error(Errc::InvalidArgument, "no output path");
  const std::filesystem::path base(prefix);
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  {
    std::ofstream csv(prefix + ".csv", std::ios::binary);
    if (!csv) throw Error(Errc::InvalidArgument, "cannot write " + prefix + ".csv");
    write_report_csv(csv, report);
  }
  std::ofstream js(prefix + ".json", std::ios::binary);
  if (!js) throw Error(Errc::InvalidArgument, "cannot write " + prefix + ".json");
  js << report_summary(report).dump(2) << '\n';
}

}  // namespace rifle
