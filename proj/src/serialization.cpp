#include "volrec/serialization.hpp"

#include <cstdio>
#include <stdexcept>

namespace volrec {

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
  const Eigen::Index nr = static_cast<Eigen::Index>(j.size());
  const Eigen::Index nc =
      nr > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index k = 0; k < nc; ++k)
      m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = j.at(i).get<double>();
  return v;
}

std::string norm_name(CurveNormalization n) {
  return n == CurveNormalization::VarianceCorrected ? "variance_corrected"
                                                    : "constant_front";
}

CurveNormalization norm_from(const std::string& s) {
  if (s == "variance_corrected") return CurveNormalization::VarianceCorrected;
  if (s == "constant_front") return CurveNormalization::ConstantFront;
  throw std::invalid_argument("unknown normalization: " + s);
}

}  // namespace

nlohmann::json to_json(const FactorSpec& spec) {
  nlohmann::json j;
  std::visit(
      [&j](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ScalarOU>) {
          j["type"] = "scalar_ou";
          j["kappa"] = p.kappa;
          j["sigma"] = p.sigma;
        } else if constexpr (std::is_same_v<T, MultiOU>) {
          j["type"] = "multi_ou";
          j["K"] = matrix_json(p.K);
          j["S"] = matrix_json(p.S);
        } else if constexpr (std::is_same_v<T, CIR>) {
          j["type"] = "cir";
          j["kappa"] = p.kappa;
          j["xbar"] = p.xbar;
          j["sigma"] = p.sigma;
        } else {
          j["type"] = "double_nelson";
          j["kappa1"] = p.kappa1;
          j["kappa2"] = p.kappa2;
          j["xbar"] = p.xbar;
          j["sigma1"] = p.sigma1;
          j["sigma2"] = p.sigma2;
          j["rho"] = p.rho;
        }
      },
      spec);
  return j;
}

FactorSpec factor_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "scalar_ou") {
    ScalarOU p;
    p.kappa = j.at("kappa").get<double>();
    p.sigma = j.at("sigma").get<double>();
    return p;
  }
  if (type == "multi_ou") {
    MultiOU p;
    p.K = matrix_from(j.at("K"));
    p.S = matrix_from(j.at("S"));
    return p;
  }
  if (type == "cir") {
    CIR p;
    p.kappa = j.at("kappa").get<double>();
    p.xbar = j.at("xbar").get<double>();
    p.sigma = j.at("sigma").get<double>();
    return p;
  }
  if (type == "double_nelson") {
    DoubleNelson p;
    p.kappa1 = j.at("kappa1").get<double>();
    p.kappa2 = j.at("kappa2").get<double>();
    p.xbar = j.at("xbar").get<double>();
    p.sigma1 = j.at("sigma1").get<double>();
    p.sigma2 = j.at("sigma2").get<double>();
    p.rho = j.at("rho").get<double>();
    return p;
  }
  throw std::invalid_argument("unknown factor type: " + type);
}

nlohmann::json to_json(const MarketModelSpec& model) {
  nlohmann::json j;
  std::visit(
      [&j](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BergomiScalar>) {
          j["type"] = "bergomi_scalar";
          j["gamma"] = m.gamma;
          j["h0"] = m.h0;
          j["normalization"] = norm_name(m.norm);
          j["factor"] = to_json(FactorSpec{m.factor});
        } else if constexpr (std::is_same_v<T, BergomiMulti>) {
          j["type"] = "bergomi_multi";
          j["gamma"] = vector_json(m.gamma);
          j["h0"] = m.h0;
          j["normalization"] = norm_name(m.norm);
          j["factor"] = to_json(FactorSpec{m.factor});
        } else if constexpr (std::is_same_v<T, ThreeHalves>) {
          j["type"] = "three_halves";
          j["factor"] = to_json(FactorSpec{m.factor});
        } else {
          j["type"] = "double_nelson";
          j["factor"] = to_json(FactorSpec{m.factor});
        }
      },
      model);
  return j;
}

MarketModelSpec model_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "bergomi_scalar") {
    BergomiScalar m;
    m.gamma = j.at("gamma").get<double>();
    m.h0 = j.at("h0").get<double>();
    if (j.contains("normalization"))
      m.norm = norm_from(j.at("normalization").get<std::string>());
    m.factor = std::get<ScalarOU>(factor_from_json(j.at("factor")));
    return m;
  }
  if (type == "bergomi_multi") {
    BergomiMulti m;
    m.gamma = vector_from(j.at("gamma"));
    m.h0 = j.at("h0").get<double>();
    if (j.contains("normalization"))
      m.norm = norm_from(j.at("normalization").get<std::string>());
    m.factor = std::get<MultiOU>(factor_from_json(j.at("factor")));
    return m;
  }
  if (type == "three_halves") {
    ThreeHalves m;
    m.factor = std::get<CIR>(factor_from_json(j.at("factor")));
    return m;
  }
  if (type == "double_nelson") {
    DoubleNelsonModel m;
    m.factor = std::get<DoubleNelson>(factor_from_json(j.at("factor")));
    return m;
  }
  throw std::invalid_argument("unknown model type: " + type);
}

namespace {

nlohmann::json basis_json(const BasisSpec& basis) {
  nlohmann::json j;
  if (const auto* h = std::get_if<HermiteBasis>(&basis)) {
    j["type"] = "hermite";
    j["max_degree"] = h->max_degree;
  } else if (const auto* l = std::get_if<GenLaguerreBasis>(&basis)) {
    j["type"] = "generalized_laguerre";
    j["alpha"] = l->alpha;
    j["max_degree"] = l->max_degree;
  } else {
    const auto& m = std::get<MultiHermite2D>(basis);
    j["type"] = "hermite_2d";
    j["Sigma"] = matrix_json(m.sigma());
    j["kappa1"] = m.kappa1();
    j["kappa2"] = m.kappa2();
    j["max_total_degree"] = m.max_total_degree();
  }
  return j;
}

BasisSpec basis_from(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "hermite") {
    HermiteBasis b;
    b.max_degree = j.at("max_degree").get<int>();
    return b;
  }
  if (type == "generalized_laguerre") {
    GenLaguerreBasis b;
    b.alpha = j.at("alpha").get<double>();
    b.max_degree = j.at("max_degree").get<int>();
    return b;
  }
  if (type == "hermite_2d") {
    return MultiHermite2D(matrix_from(j.at("Sigma")),
                          j.at("kappa1").get<double>(),
                          j.at("kappa2").get<double>(),
                          j.at("max_total_degree").get<int>());
  }
  throw std::invalid_argument("unknown basis type: " + type);
}

}  // namespace

nlohmann::json to_json(const EigenSolution& sol) {
  nlohmann::json j;
  j["basis"] = basis_json(sol.basis);
  j["scaling"] = {{"A", matrix_json(sol.scaling.A)},
                  {"b", vector_json(sol.scaling.b)}};
  j["family"] = sol.family == EvalFamily::Dual ? "dual" : "primary";
  nlohmann::json idx = nlohmann::json::array();
  for (const BasisIndex& n : sol.indices)
    idx.push_back(nlohmann::json::array({n.n1, n.n2}));
  j["indices"] = idx;
  j["coefficients"] = vector_json(sol.coefficients);
  j["rates"] = vector_json(sol.rates);
  j["eigenvalues"] = vector_json(sol.eigenvalues);
  j["tau"] = sol.tau;
  j["truncation"] = sol.truncation;
  j["tail_estimate"] = sol.tail_estimate;
  return j;
}

EigenSolution eigen_solution_from_json(const nlohmann::json& j) {
  EigenSolution sol;
  sol.basis = basis_from(j.at("basis"));
  sol.scaling.A = matrix_from(j.at("scaling").at("A"));
  sol.scaling.b = vector_from(j.at("scaling").at("b"));
  sol.family = j.at("family").get<std::string>() == "dual"
                   ? EvalFamily::Dual
                   : EvalFamily::Primary;
  for (const auto& n : j.at("indices"))
    sol.indices.push_back({n.at(0).get<int>(), n.at(1).get<int>()});
  sol.coefficients = vector_from(j.at("coefficients"));
  sol.rates = vector_from(j.at("rates"));
  sol.eigenvalues = vector_from(j.at("eigenvalues"));
  sol.tau = j.at("tau").get<double>();
  sol.truncation = j.at("truncation").get<int>();
  sol.tail_estimate = j.at("tail_estimate").get<double>();
  return sol;
}

nlohmann::json to_json(const PolynomialSolution& sol) {
  return {{"a11", sol.a11}, {"a12", sol.a12}, {"a22", sol.a22},
          {"b1", sol.b1},   {"b2", sol.b2},   {"c", sol.c},
          {"target", sol.target}, {"tau", sol.tau}};
}

PolynomialSolution polynomial_solution_from_json(const nlohmann::json& j) {
  PolynomialSolution sol;
  sol.a11 = j.at("a11").get<double>();
  sol.a12 = j.at("a12").get<double>();
  sol.a22 = j.at("a22").get<double>();
  sol.b1 = j.at("b1").get<double>();
  sol.b2 = j.at("b2").get<double>();
  sol.c = j.at("c").get<double>();
  sol.target = j.at("target").get<std::string>();
  sol.tau = j.at("tau").get<double>();
  return sol;
}

nlohmann::json to_json(const SolvabilityReport& rep) {
  return {{"value", rep.value},
          {"scale", rep.scale},
          {"tolerance", rep.tolerance},
          {"pass", rep.pass},
          {"method", rep.method},
          {"model", rep.model},
          {"nodes", rep.nodes},
          {"node_doubling_delta", rep.node_doubling_delta}};
}

nlohmann::json to_json(const ConsistencyReport& rep) {
  return {{"states", matrix_json(rep.states)},
          {"thetas", rep.thetas},
          {"drift_residual", matrix_json(rep.drift_residual)},
          {"diffusion_residual", matrix_json(rep.diffusion_residual)},
          {"max_residual", rep.max_residual},
          {"rms_residual", rep.rms_residual},
          {"scale", rep.scale},
          {"tolerance", rep.tolerance},
          {"pass", rep.pass}};
}

nlohmann::json to_json(const ProbeReport& rep) {
  nlohmann::json ev = nlohmann::json::array();
  for (const ProbeEvidence& e : rep.evidence)
    ev.push_back({{"theta", e.theta},
                  {"window", e.window},
                  {"dispersion", e.dispersion},
                  {"threshold", e.threshold},
                  {"scale", e.scale},
                  {"inconsistent", e.inconsistent}});
  return {{"family", rep.family},
          {"consistent", rep.consistent},
          {"evidence", ev},
          {"n_histories", rep.n_histories},
          {"seed", rep.seed}};
}

nlohmann::json to_json(const ForwardResidual& res) {
  return {{"rms", res.rms},
          {"max_abs", res.max_abs},
          {"n_points", res.n_points}};
}

nlohmann::json to_json(const PositivityScan& scan) {
  return {{"min_value", scan.min_value},
          {"argmin", vector_json(scan.argmin)},
          {"fraction_negative", scan.fraction_negative},
          {"n_points", scan.n_points}};
}

nlohmann::json to_json(const OracleEstimate& est) {
  return {{"value", est.value},       {"std_error", est.std_error},
          {"n_paths", est.n_paths},   {"dt", est.dt},
          {"seed", est.seed},         {"method", est.method}};
}

std::string csv_format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_table(const std::vector<std::string>& header,
                      const Eigen::MatrixXd& rows) {
  if (static_cast<Eigen::Index>(header.size()) != rows.cols())
    throw std::invalid_argument("csv_table: header width mismatch");
  std::string out;
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j) out += ',';
      out += csv_format(rows(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string paths_csv(const PathEnsemble& ensemble) {
  const int d =
      ensemble.paths.empty() ? 0 : static_cast<int>(ensemble.paths[0].cols());
  std::vector<std::string> header = {"path_id", "time"};
  for (int k = 0; k < d; ++k) header.push_back("x" + std::to_string(k + 1));
  const int steps = static_cast<int>(ensemble.times.size());
  Eigen::MatrixXd rows(
      static_cast<Eigen::Index>(ensemble.paths.size()) * steps, 2 + d);
  Eigen::Index r = 0;
  for (size_t p = 0; p < ensemble.paths.size(); ++p)
    for (int t = 0; t < steps; ++t) {
      rows(r, 0) = static_cast<double>(p);
      rows(r, 1) = ensemble.times[t];
      for (int k = 0; k < d; ++k) rows(r, 2 + k) = ensemble.paths[p](t, k);
      ++r;
    }
  return csv_table(header, rows);
}

std::string curve_csv(const FuturesCurve& curve) {
  const int m = static_cast<int>(curve.vols.cols());
  std::vector<std::string> header = {"theta", "price", "roll_yield"};
  for (int k = 0; k < m; ++k) header.push_back("nu_" + std::to_string(k + 1));
  Eigen::MatrixXd rows(curve.thetas.size(), 3 + m);
  rows.col(0) = curve.thetas;
  rows.col(1) = curve.prices;
  rows.col(2) = curve.roll_yields;
  rows.rightCols(m) = curve.vols;
  return csv_table(header, rows);
}

std::string grid_csv(const Eigen::MatrixXd& states, const Eigen::VectorXd& v,
                     const Eigen::VectorXd& h) {
  if (states.rows() != v.size() || v.size() != h.size())
    throw std::invalid_argument("grid_csv: row count mismatch");
  std::vector<std::string> header;
  for (Eigen::Index k = 0; k < states.cols(); ++k)
    header.push_back("x" + std::to_string(k + 1));
  header.insert(header.end(), {"v", "h", "Q"});
  Eigen::MatrixXd rows(states.rows(), states.cols() + 3);
  rows.leftCols(states.cols()) = states;
  rows.col(states.cols()) = v;
  rows.col(states.cols() + 1) = h;
  rows.col(states.cols() + 2) = v - h;
  return csv_table(header, rows);
}

std::string consistency_csv(const ConsistencyReport& rep) {
  std::vector<std::string> header;
  for (Eigen::Index k = 0; k < rep.states.cols(); ++k)
    header.push_back("x" + std::to_string(k + 1));
  header.insert(header.end(),
                {"theta", "drift_residual", "diffusion_residual"});
  const Eigen::Index nx = rep.states.rows();
  const Eigen::Index nt = static_cast<Eigen::Index>(rep.thetas.size());
  Eigen::MatrixXd rows(nx * nt, rep.states.cols() + 3);
  Eigen::Index r = 0;
  for (Eigen::Index j = 0; j < nt; ++j)
    for (Eigen::Index i = 0; i < nx; ++i) {
      rows.row(r).head(rep.states.cols()) = rep.states.row(i);
      rows(r, rep.states.cols()) = rep.thetas[static_cast<size_t>(j)];
      rows(r, rep.states.cols() + 1) = rep.drift_residual(i, j);
      rows(r, rep.states.cols() + 2) = rep.diffusion_residual(i, j);
      ++r;
    }
  return csv_table(header, rows);
}

}  // namespace volrec
