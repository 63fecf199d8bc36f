// Batch front-end: loads a JSON run config, executes one command, and writes
// its artifacts. Exit codes: 0 success, 1 input error, 2 failed check.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "volrec/consistency.hpp"
#include "volrec/factors.hpp"
#include "volrec/inverse.hpp"
#include "volrec/marketmodels.hpp"
#include "volrec/oracle.hpp"
#include "volrec/serialization.hpp"

namespace {

using nlohmann::json;
using namespace volrec;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitCheckFailed = 2;

struct RunOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::string format = "json";
  std::optional<std::uint64_t> seed;
  bool require_positive = false;
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  json j;
  in >> j;
  return j;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
  std::cout << "wrote " << path.string() << "\n";
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

QuadConfig quad_config(const json& cfg) {
  QuadConfig q;
  if (!cfg.contains("quadrature")) return q;
  const json& j = cfg.at("quadrature");
  q.nodes = j.value("nodes", q.nodes);
  q.max_nodes = j.value("max_nodes", q.max_nodes);
  q.tol = j.value("tol", q.tol);
  q.laguerre_shift = j.value("laguerre_shift", q.laguerre_shift);
  return q;
}

FactorSpec config_factor(const json& cfg) {
  if (cfg.contains("factor")) return factor_from_json(cfg.at("factor"));
  return model_factor(model_from_json(cfg.at("model")));
}

// Grid block: {"per_dim": N, "n_sd": s} for a stationary scan, or
// {"per_dim": N, "min": [...], "max": [...]} for explicit ranges.
Eigen::MatrixXd config_grid(const json& cfg, const FactorSpec& factor) {
  int per_dim = 41;
  double n_sd = 3.0;
  if (cfg.contains("grid")) {
    const json& g = cfg.at("grid");
    per_dim = g.value("per_dim", per_dim);
    n_sd = g.value("n_sd", n_sd);
    if (g.contains("min") != g.contains("max"))
      throw std::invalid_argument("grid: min and max must come together");
    if (g.contains("min")) {
      const auto lo = g.at("min").get<std::vector<double>>();
      const auto hi = g.at("max").get<std::vector<double>>();
      const int d = state_dim(factor);
      if (static_cast<int>(lo.size()) != d || lo.size() != hi.size())
        throw std::invalid_argument("grid: range width must match the factor");
      std::vector<Eigen::VectorXd> axes(d);
      for (int k = 0; k < d; ++k)
        axes[k] = Eigen::VectorXd::LinSpaced(per_dim, lo[k], hi[k]);
      if (d == 1) return axes[0];
      Eigen::MatrixXd grid(per_dim * per_dim, 2);
      int r = 0;
      for (int i = 0; i < per_dim; ++i)
        for (int j = 0; j < per_dim; ++j) {
          grid(r, 0) = axes[0][i];
          grid(r, 1) = axes[1][j];
          ++r;
        }
      return grid;
    }
  }
  return default_scan_grid(factor, per_dim, n_sd);
}

std::vector<double> config_thetas(const json& cfg) {
  if (cfg.contains("thetas"))
    return cfg.at("thetas").get<std::vector<double>>();
  return {0.0, 30.0 / 365.0, 0.25};
}

std::uint64_t config_seed(const json& cfg, const RunOptions& opt) {
  if (opt.seed) return *opt.seed;
  return cfg.value("seed", std::uint64_t{20240801});
}

int cmd_solvability(const json& cfg, const RunOptions& opt) {
  const MarketModelSpec model = model_from_json(cfg.at("model"));
  const SolvabilityReport rep = check_solvability(model, quad_config(cfg));
  write_json(std::filesystem::path(opt.out_dir) / "solvability.json",
             to_json(rep));
  std::printf("solvability %s: value=%.3e scale=%.3e -> %s\n",
              rep.model.c_str(), rep.value, rep.scale,
              rep.pass ? "pass" : "FAIL");
  return rep.pass ? kExitOk : kExitCheckFailed;
}

int cmd_recover(const json& cfg, const RunOptions& opt) {
  const MarketModelSpec model = model_from_json(cfg.at("model"));
  const double tau = cfg.value("tau", kDefaultTau);
  const int max_degree = cfg.value("max_degree", -1);
  const Eigen::MatrixXd grid = config_grid(cfg, model_factor(model));
  const std::filesystem::path out(opt.out_dir);

  Eigen::VectorXd v(grid.rows()), h(grid.rows());
  auto h2 = vix_squared(model);
  json sol_json;
  PositivityScan scan;
  ForwardResidual fwd;
  if (std::holds_alternative<DoubleNelsonModel>(model)) {
    const auto& dn = std::get<DoubleNelsonModel>(model);
    const DNTarget target = cfg.value("target", std::string("x1_squared")) ==
                                    std::string("x1")
                                ? DNTarget::LinearDemo
                                : DNTarget::SquaredVix;
    const PolynomialSolution sol = recover_double_nelson(dn, tau, target);
    for (int i = 0; i < grid.rows(); ++i)
      v[i] = evaluate_v2(sol, grid.row(i).transpose());
    sol_json = to_json(sol);
    scan = positivity_scan(sol, grid);
    fwd = forward_residual(sol, dn, grid);
  } else {
    const EigenSolution sol = recover(model, tau, max_degree);
    for (int i = 0; i < grid.rows(); ++i)
      v[i] = evaluate_v2(sol, grid.row(i).transpose());
    sol_json = to_json(sol);
    scan = positivity_scan(sol, grid);
    fwd = forward_residual(sol, model, grid);
  }
  for (int i = 0; i < grid.rows(); ++i)
    h[i] = vix(model, grid.row(i).transpose());

  json rep;
  rep["solution"] = sol_json;
  rep["forward_residual"] = to_json(fwd);
  rep["positivity"] = to_json(scan);
  write_json(out / "recover.json", rep);
  write_file(out / "recover_grid.csv", grid_csv(grid, v, h.array().square()));
  std::printf("recover %s: forward rms=%.3e min v2=%.3e\n",
              model_name(model).c_str(), fwd.rms, scan.min_value);
  if (opt.require_positive && scan.min_value < 0.0) {
    std::printf("positivity violated at the scan minimum -> FAIL\n");
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_consistency(const json& cfg, const RunOptions& opt) {
  const std::filesystem::path out(opt.out_dir);
  if (cfg.contains("probe")) {
    const json& p = cfg.at("probe");
    NuFamily family;
    family.name = p.value("family", family.name);
    family.gamma = p.value("gamma", family.gamma);
    family.kappa = p.value("kappa", family.kappa);
    ScalarOU factor;
    if (cfg.contains("factor") || cfg.contains("model"))
      factor = std::get<ScalarOU>(config_factor(cfg));
    const std::vector<double> thetas =
        p.value("thetas", std::vector<double>{0.1, 0.5});
    const ProbeReport rep = markovianity_probe(
        family, factor, thetas, p.value("window", 6.0),
        p.value("dt", 1.0 / 365.0), p.value("n_histories", 2000),
        config_seed(cfg, opt));
    write_json(out / "probe.json", to_json(rep));
    std::printf("probe %s: %s\n", rep.family.c_str(),
                rep.consistent ? "consistent" : "INCONSISTENT");
    return rep.consistent ? kExitOk : kExitCheckFailed;
  }
  const MarketModelSpec model = model_from_json(cfg.at("model"));
  const FactorSpec factor = config_factor(cfg);
  const Eigen::MatrixXd grid = config_grid(cfg, factor);
  const ConsistencyReport rep =
      check_consistency(model, factor, grid, config_thetas(cfg),
                        cfg.value("tolerance", 1e-9));
  if (opt.format == "csv")
    write_file(out / "consistency.csv", consistency_csv(rep));
  write_json(out / "consistency.json", to_json(rep));
  std::printf("consistency %s: max=%.3e rms=%.3e -> %s\n",
              model_name(model).c_str(), rep.max_residual, rep.rms_residual,
              rep.pass ? "pass" : "FAIL");
  return rep.pass ? kExitOk : kExitCheckFailed;
}

int cmd_hjm(const json& cfg, const RunOptions& opt) {
  const MarketModelSpec model = model_from_json(cfg.at("model"));
  const FactorSpec factor = config_factor(cfg);
  const json& hj = cfg.at("hjm");
  const Eigen::VectorXd x = [&] {
    if (hj.contains("state")) {
      const auto s = hj.at("state").get<std::vector<double>>();
      return Eigen::VectorXd(
          Eigen::Map<const Eigen::VectorXd>(s.data(), s.size()));
    }
    return stationary_mean(factor);
  }();
  const auto ts = hj.value("t", std::vector<double>{0.0});
  const auto Ts = hj.at("T").get<std::vector<double>>();

  std::vector<Eigen::VectorXd> rows;
  int m = 0;
  for (double t : ts)
    for (double T : Ts) {
      if (T < t) continue;
      const HJMQuantities q = hjm_quantities(model, factor, x, t, T);
      m = static_cast<int>(q.nu.size());
      Eigen::VectorXd row(4 + 2 * m);
      row << t, T, q.forward_rate, q.alpha, q.beta, q.nu;
      rows.push_back(row);
    }
  if (rows.empty())
    throw std::invalid_argument("hjm: no (t, T) pairs with T >= t");
  std::vector<std::string> header = {"t", "T", "forward_rate", "alpha"};
  for (int k = 0; k < m; ++k) header.push_back("beta_" + std::to_string(k + 1));
  for (int k = 0; k < m; ++k) header.push_back("nu_" + std::to_string(k + 1));
  Eigen::MatrixXd table(static_cast<Eigen::Index>(rows.size()), 4 + 2 * m);
  for (size_t i = 0; i < rows.size(); ++i)
    table.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  write_file(std::filesystem::path(opt.out_dir) / "hjm_grid.csv",
             csv_table(header, table));
  std::printf("hjm %s: %d rows\n", model_name(model).c_str(),
              static_cast<int>(rows.size()));
  return kExitOk;
}

int cmd_simulate(const json& cfg, const RunOptions& opt) {
  const FactorSpec factor = config_factor(cfg);
  const json& s = cfg.at("simulate");
  Eigen::VectorXd x0 = stationary_mean(factor);
  if (s.contains("x0")) {
    const auto v = s.at("x0").get<std::vector<double>>();
    x0 = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
  }
  const PathEnsemble ens =
      simulate(factor, x0, s.value("dt", 1.0 / 365.0),
               s.value("n_steps", 365), s.value("n_paths", 8),
               config_seed(cfg, opt));
  write_file(std::filesystem::path(opt.out_dir) / "paths.csv",
             paths_csv(ens));
  std::printf("simulate: %d paths x %d steps (%s)\n",
              static_cast<int>(ens.paths.size()),
              static_cast<int>(ens.times.size()) - 1, ens.scheme.c_str());
  return kExitOk;
}

Eigen::MatrixXd matrix_from_rows(const json& j) {
  const Eigen::Index nr = static_cast<Eigen::Index>(j.size());
  const Eigen::Index nc =
      nr > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index k = 0; k < nc; ++k)
      m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

int cmd_oracle_check(const json& cfg, const RunOptions& opt) {
  const MarketModelSpec model = model_from_json(cfg.at("model"));
  const double tau = cfg.value("tau", kDefaultTau);
  const FactorSpec factor = model_factor(model);

  MCConfig mc;
  Eigen::MatrixXd states;
  if (cfg.contains("oracle")) {
    const json& o = cfg.at("oracle");
    mc.n_paths = o.value("n_paths", mc.n_paths);
    mc.n_steps = o.value("n_steps", mc.n_steps);
    if (o.contains("states")) states = matrix_from_rows(o.at("states"));
  }
  mc.seed = config_seed(cfg, opt);
  if (states.rows() == 0) states = default_scan_grid(factor, 5, 1.5);

  std::function<double(const Eigen::VectorXd&)> v2;
  if (std::holds_alternative<DoubleNelsonModel>(model)) {
    const PolynomialSolution sol = recover_double_nelson(
        std::get<DoubleNelsonModel>(model), tau, DNTarget::SquaredVix);
    v2 = [sol](const Eigen::VectorXd& x) { return evaluate_v2(sol, x); };
  } else {
    const EigenSolution sol = recover(model, tau);
    v2 = [sol](const Eigen::VectorXd& x) { return evaluate_v2(sol, x); };
  }

  auto h2 = vix_squared(model);
  const int n = static_cast<int>(states.rows());
  Eigen::MatrixXd table(n, states.cols() + 4);
  json entries = json::array();
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = states.row(i).transpose();
    const OracleEstimate est = mc_phi(factor, v2, x, tau, mc);
    const double target = h2(x);
    const double z = (est.value - target) / est.std_error;
    worst = std::max(worst, std::abs(z));
    table.row(i).head(states.cols()) = states.row(i);
    table(i, states.cols()) = target;
    table(i, states.cols() + 1) = est.value;
    table(i, states.cols() + 2) = est.std_error;
    table(i, states.cols() + 3) = z;
    json e = to_json(est);
    e["target_h2"] = target;
    e["z_score"] = z;
    entries.push_back(e);
  }
  std::vector<std::string> header;
  for (Eigen::Index k = 0; k < states.cols(); ++k)
    header.push_back("x" + std::to_string(k + 1));
  header.insert(header.end(), {"h2", "estimate", "std_error", "z"});
  const std::filesystem::path out(opt.out_dir);
  write_file(out / "oracle_check.csv", csv_table(header, table));
  write_json(out / "oracle_check.json",
             json{{"model", model_name(model)}, {"entries", entries}});
  std::printf("oracle-check %s: worst |z|=%.2f over %d states\n",
              model_name(model).c_str(), worst, n);
  return worst <= 4.0 ? kExitOk : kExitCheckFailed;
}

int cmd_curve(const json& cfg, const RunOptions& opt) {
  const MarketModelSpec model = model_from_json(cfg.at("model"));
  const FactorSpec factor = model_factor(model);
  Eigen::VectorXd x = stationary_mean(factor);
  if (cfg.contains("state")) {
    const auto v = cfg.at("state").get<std::vector<double>>();
    x = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
  }
  const std::vector<double> tv = config_thetas(cfg);
  const Eigen::VectorXd thetas =
      Eigen::Map<const Eigen::VectorXd>(tv.data(), tv.size());
  auto fc = futures_curve(model, x, thetas);
  if (const auto* na = std::get_if<NotAvailable>(&fc))
    throw std::invalid_argument("curve: " + na->reason);
  write_file(std::filesystem::path(opt.out_dir) / "curve.csv",
             curve_csv(std::get<FuturesCurve>(fc)));
  std::printf("curve %s: %d horizons\n", model_name(model).c_str(),
              static_cast<int>(thetas.size()));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volatility-function recovery toolkit"};
  app.require_subcommand(1);

  RunOptions opt;
  std::uint64_t seed_flag = 0;
  bool seed_given = false;
  for (const char* name : {"solvability", "recover", "consistency", "hjm",
                           "simulate", "oracle-check", "curve"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config_path, "run config (JSON)")
        ->required();
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--seed", seed_flag, "override the config seed")
        ->each([&seed_given](const std::string&) { seed_given = true; });
    sub->add_option("--format", opt.format, "csv|json")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_flag("--require-positive", opt.require_positive,
                  "fail when the recovered v2 scan goes negative");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitInput;
  }
  if (seed_given) opt.seed = seed_flag;

  try {
    std::filesystem::create_directories(opt.out_dir);
    const json cfg = load_config(opt.config_path);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "solvability") return cmd_solvability(cfg, opt);
    if (cmd == "recover") return cmd_recover(cfg, opt);
    if (cmd == "consistency") return cmd_consistency(cfg, opt);
    if (cmd == "hjm") return cmd_hjm(cfg, opt);
    if (cmd == "simulate") return cmd_simulate(cfg, opt);
    if (cmd == "oracle-check") return cmd_oracle_check(cfg, opt);
    if (cmd == "curve") return cmd_curve(cfg, opt);
    std::cerr << "unknown command: " << cmd << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}
