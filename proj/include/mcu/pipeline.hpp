#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcu/datagen.hpp"
#include "mcu/optimizer.hpp"
#include "mcu/regression.hpp"
#include "mcu/sdp.hpp"
#include "mcu/unfolding.hpp"

namespace mcu::pipeline {

using json = nlohmann::ordered_json;

struct DataConfig {
  std::string kind = "swiss";  // swiss | penny | bracket | files
  std::string preset = "desk";  // desk | paper
  std::optional<Index> sample_count;
  std::optional<Index> grid_size;
  std::optional<Index> bracket_points;
  double control_low = 1.0;
  double control_high = 10.0;
  std::optional<std::string> base_asset;
  std::optional<std::string> x_csv;  // kind = files
  std::optional<std::string> y_csv;
  Index ambient_dim = 1;
  std::optional<std::vector<double>> nominal_controls;
  std::optional<std::string> nominal_csv;  // flattened nominal response, one row
};

struct OptimizerSettings {
  long budget = 10000;
  double initial_temperature = 5230.0;
  double visiting_parameter = 2.62;
  double acceptance_parameter = -5.0;
  int restarts = 4;
  double restart_temperature_ratio = 2e-5;
  double margin = 0.5;
  bool local_polish = true;
  long nominal_evaluations = 4000;
  bool write_trace = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DataConfig data;
  UnfoldConfig unfold;
  std::vector<Method> methods{Method::MCU, Method::MVU, Method::PCA};
  double lambda = 1e-8;
  OptimizerSettings optimizer;
  SdpTolerances<double> solver;
};

Method parse_method(const std::string& name);
std::string method_name(Method m);  // lower case, used in file names

/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig parse_config(const json& doc);
json to_json(const RunConfig& config, bool include_output_dir = true);
RunConfig load_config(const std::string& path);

/// MCU_SEED, MCU_OUTPUT and MCU_METHOD. Flags are applied afterwards by the
/// caller, so flags win over the environment, which wins over the file.
void apply_environment(RunConfig& config, std::optional<Method>& method);

/// Loaded or generated training data in raw and preprocessed form.
struct Prepared {
  std::optional<datagen::Dataset> dataset;  // synthetic kinds only
  Eigen::MatrixXd X_raw;
  Eigen::MatrixXd Y_raw;
  Index ambient_dim = 1;
  CovariateMatrix<double> X;
  ResponseMatrix<double> Y;
};

Prepared prepare(const RunConfig& config);

struct FitOutcome {
  Method method = Method::MCU;
  Embedding<double> embedding;
  RegressionModel<double> model;
  std::optional<SdpSolution<double>> solution;
  std::optional<NeighborGraph<double>> graph;
  double max_edge_residual = 0.0;  // relative, over graph edges
  double centering_residual = 0.0;  // |tr(11^T Q)| / tr(Q)
  double trace_bound = 0.0;
  Index components = 0;
};

FitOutcome fit_method(const Prepared& data, const RunConfig& config, Method method);

struct NominalCase {
  Eigen::RowVectorXd y_raw;                  // flattened
  std::optional<Eigen::Vector2d> x_true;     // known for synthetic kinds
};

NominalCase nominal_case(const RunConfig& config, const Prepared& data);

struct OptimizeOutcome {
  NominalTarget<double> target;
  NominalEmbedding<double> nominal;
  CovariateRecovery<double> recovery;
  std::optional<double> covariate_deviation;
  std::optional<Eigen::VectorXd> pointwise;
};

OptimizeOutcome optimize_method(const Prepared& data, const RunConfig& config, const Embedding<double>& embedding,
                                const RegressionModel<double>& model, const NominalCase& nominal);

/// Pointwise filter for deviation summaries: penny pixels that are nonzero
/// in either image, bracket points beyond the smallest reachable pivot.
std::optional<std::vector<bool>> deviation_mask(const Prepared& data, const Eigen::RowVectorXd& y_hat,
                                                const Eigen::RowVectorXd& y_nom);

// Subcommands. Each writes its artifacts plus run_<name>.json, the config
// echo consumed by replay.
void cmd_generate(const RunConfig& config);
void cmd_fit(const RunConfig& config, std::optional<Method> method, bool allow_nonconverged);
void cmd_compare(const RunConfig& config);
void cmd_optimize(const RunConfig& config, std::optional<Method> method);
void cmd_replay(const std::string& echo_path, const std::optional<std::string>& output_dir);

/// Minimal SVG boxplot from per-method quartiles.
std::string boxplot_svg(const std::vector<std::string>& labels, const std::vector<SummaryStats<double>>& stats,
                        const std::string& title);

}  // namespace mcu::pipeline
