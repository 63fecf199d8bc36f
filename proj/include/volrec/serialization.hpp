#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "volrec/consistency.hpp"
#include "volrec/factors.hpp"
#include "volrec/inverse.hpp"
#include "volrec/marketmodels.hpp"
#include "volrec/oracle.hpp"

namespace volrec {

// JSON schemas are tagged with a "type" field; every to_json/from_json pair
// round-trips to an equal in-memory value, with doubles preserved bit-exactly
// via shortest round-trip printing.
nlohmann::json to_json(const FactorSpec& spec);
FactorSpec factor_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MarketModelSpec& model);
MarketModelSpec model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const EigenSolution& sol);
EigenSolution eigen_solution_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PolynomialSolution& sol);
PolynomialSolution polynomial_solution_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SolvabilityReport& rep);
nlohmann::json to_json(const ConsistencyReport& rep);
nlohmann::json to_json(const ProbeReport& rep);
nlohmann::json to_json(const ForwardResidual& res);
nlohmann::json to_json(const PositivityScan& scan);
nlohmann::json to_json(const OracleEstimate& est);

// Full-precision (17 significant digit) decimal rendering used by every CSV
// cell, so emitted artifacts are deterministic and round-trip exactly.
std::string csv_format(double v);

// Generic table: header joined by commas, one row per matrix row.
std::string csv_table(const std::vector<std::string>& header,
                      const Eigen::MatrixXd& rows);

// Column contracts:
//   paths:  path_id,time,x1[,x2,...]
//   curve:  theta,price,roll_yield,nu_1[,nu_2...]
//   grid:   x1[,x2],v,h,Q   with Q = v - h
std::string paths_csv(const PathEnsemble& ensemble);
std::string curve_csv(const FuturesCurve& curve);
std::string grid_csv(const Eigen::MatrixXd& states, const Eigen::VectorXd& v,
                     const Eigen::VectorXd& h);
std::string consistency_csv(const ConsistencyReport& rep);

}  // namespace volrec
