#include "mcu/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "mcu/io.hpp"

namespace mcu::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr std::uint64_t kNominalStream = 1000003;

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) config_error(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) known = known || it.key() == key;
    if (!known) config_error("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& target, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(where + "." + key + " has the wrong type");
  }
}

template <typename T>
void read_optional(const json& obj, const char* key, std::optional<T>& target, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T value{};
  read(obj, key, value, where);
  target = value;
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void require_output_dir(const RunConfig& config) {
  if (!io::is_directory(config.output_dir))
    throw Error(ErrorCode::IoError, "output directory does not exist: " + config.output_dir);
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

void write_echo(const RunConfig& config, const std::string& command, std::optional<Method> method,
                bool allow_nonconverged) {
  json echo;
  echo["command"] = command;
  echo["method"] = method ? json(method_name(*method)) : json(nullptr);
  echo["allow_nonconverged"] = allow_nonconverged;
  echo["config"] = to_json(config, false);
  const std::string name = "run_" + command + (method ? "_" + method_name(*method) : "") + ".json";
  io::atomic_write(path_in(config.output_dir, name), dump(echo));
}

class Timer {
 public:
  Timer(const RunConfig& config, std::string label)
      : path_(path_in(config.output_dir, "timings.log")), label_(std::move(label)),
        start_(std::chrono::steady_clock::now()) {}
  ~Timer() {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(path_, std::ios::app);
    if (out) out << label_ << ' ' << seconds << " s\n";
  }

 private:
  std::string path_;
  std::string label_;
  std::chrono::steady_clock::time_point start_;
};

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty()) throw Error(ErrorCode::MissingBundle, "malformed matrix in model bundle");
  const auto r = static_cast<Index>(rows.size());
  const auto c = static_cast<Index>(rows.at(0).size());
  Eigen::MatrixXd out(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) out(i, j) = rows.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j)).get<double>();
  return out;
}

json summary_json(const SummaryStats<double>& s) {
  return json{{"count", s.count}, {"min", s.min},       {"q1", s.q1},   {"median", s.median},
              {"q3", s.q3},       {"max", s.max},       {"iqr", s.iqr()}, {"mean", s.mean}};
}

std::vector<Method> selected(const RunConfig& config, std::optional<Method> method) {
  if (method) return {*method};
  return config.methods;
}

std::string dimension_text(const UnfoldConfig& u) {
  switch (u.dimension_mode) {
    case DimensionMode::Predictors: return "predictors";
    case DimensionMode::Otsu: return "otsu";
    case DimensionMode::Fixed: return std::to_string(u.m_tilde);
  }
  return "predictors";
}

datagen::GeneratorSpec generator_spec(const RunConfig& config) {
  const datagen::Kind kind = datagen::parse_kind(config.data.kind);
  datagen::GeneratorSpec spec = config.data.preset == "paper" ? datagen::GeneratorSpec::paper_scale(kind, config.seed)
                                                               : datagen::GeneratorSpec::desk(kind, config.seed);
  if (config.data.sample_count) spec.sample_count = *config.data.sample_count;
  if (config.data.grid_size) spec.grid_size = *config.data.grid_size;
  if (config.data.bracket_points) spec.bracket_points = *config.data.bracket_points;
  spec.control_low = config.data.control_low;
  spec.control_high = config.data.control_high;
  spec.base_asset = config.data.base_asset;
  return spec;
}

struct Bundle {
  Embedding<double> embedding;
  RegressionModel<double> model;
  json doc;
};

Bundle load_bundle(const RunConfig& config, Method method) {
  const std::string model_path = path_in(config.output_dir, "model_" + method_name(method) + ".json");
  const std::string embedding_path = path_in(config.output_dir, "embedding_" + method_name(method) + ".csv");
  if (!io::exists(model_path) || !io::exists(embedding_path))
    throw Error(ErrorCode::MissingBundle, "no fitted bundle for " + method_name(method) + " in " + config.output_dir +
                                              "; run fit first");
  Bundle b;
  try {
    b.doc = json::parse(io::read_text(model_path));
    b.model.B_hat = matrix_from_json(b.doc.at("B_hat"));
    b.model.lambda = b.doc.at("lambda").get<double>();
    b.embedding.m_tilde = b.doc.at("m_tilde").get<Index>();
    const auto& ev = b.doc.at("eigenvalues");
    b.embedding.eigenvalues.resize(static_cast<Index>(ev.size()));
    for (std::size_t i = 0; i < ev.size(); ++i) b.embedding.eigenvalues(static_cast<Index>(i)) = ev.at(i).get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MissingBundle, "malformed model bundle " + model_path + ": " + e.what());
  }
  b.embedding.method = method;
  b.embedding.Y_tilde = io::read_csv(embedding_path).values;
  if (b.embedding.Y_tilde.cols() != b.model.outputs())
    throw Error(ErrorCode::MissingBundle, "embedding and model disagree on the reduced dimension");
  return b;
}

std::vector<std::string> numbered(const std::string& prefix, Index count) {
  std::vector<std::string> out;
  for (Index i = 1; i <= count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace

Method parse_method(const std::string& name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "mcu") return Method::MCU;
  if (lower == "mvu") return Method::MVU;
  if (lower == "pca") return Method::PCA;
  config_error("unknown method '" + name + "' (expected mcu, mvu or pca)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::MCU: return "mcu";
    case Method::MVU: return "mvu";
    case Method::PCA: return "pca";
  }
  return "mcu";
}

RunConfig parse_config(const json& doc) {
  RunConfig c;
  check_keys(doc, {"seed", "output_dir", "data", "unfold", "regression", "optimizer", "solver"}, "config");
  read(doc, "seed", c.seed, "config");
  read(doc, "output_dir", c.output_dir, "config");

  if (doc.contains("data")) {
    const json& d = doc.at("data");
    check_keys(d,
               {"kind", "preset", "sample_count", "grid_size", "bracket_points", "control_low", "control_high",
                "base_asset", "x_csv", "y_csv", "ambient_dim", "nominal_controls", "nominal_csv"},
               "data");
    read(d, "kind", c.data.kind, "data");
    read(d, "preset", c.data.preset, "data");
    read_optional(d, "sample_count", c.data.sample_count, "data");
    read_optional(d, "grid_size", c.data.grid_size, "data");
    read_optional(d, "bracket_points", c.data.bracket_points, "data");
    read(d, "control_low", c.data.control_low, "data");
    read(d, "control_high", c.data.control_high, "data");
    read_optional(d, "base_asset", c.data.base_asset, "data");
    read_optional(d, "x_csv", c.data.x_csv, "data");
    read_optional(d, "y_csv", c.data.y_csv, "data");
    read(d, "ambient_dim", c.data.ambient_dim, "data");
    read_optional(d, "nominal_controls", c.data.nominal_controls, "data");
    read_optional(d, "nominal_csv", c.data.nominal_csv, "data");
  }
  if (c.data.kind != "swiss" && c.data.kind != "penny" && c.data.kind != "bracket" && c.data.kind != "files")
    config_error("data.kind must be swiss, penny, bracket or files");
  if (c.data.preset != "desk" && c.data.preset != "paper") config_error("data.preset must be desk or paper");
  if (c.data.kind == "files" && (!c.data.x_csv || !c.data.y_csv))
    config_error("data.kind = files needs data.x_csv and data.y_csv");
  if (c.data.sample_count && *c.data.sample_count < 2) config_error("data.sample_count must be at least 2");
  if (c.data.grid_size && *c.data.grid_size < 2) config_error("data.grid_size must be at least 2");
  if (c.data.bracket_points && *c.data.bracket_points < 1) config_error("data.bracket_points must be positive");
  if (!(c.data.control_low < c.data.control_high)) config_error("data.control_low must be below data.control_high");
  if (c.data.ambient_dim < 1) config_error("data.ambient_dim must be positive");
  if (c.data.nominal_controls && c.data.nominal_controls->size() != 2)
    config_error("data.nominal_controls must hold two values");

  if (doc.contains("unfold")) {
    const json& u = doc.at("unfold");
    check_keys(u, {"k", "alpha", "m_tilde", "rule", "methods"}, "unfold");
    read(u, "k", c.unfold.k, "unfold");
    read(u, "alpha", c.unfold.alpha, "unfold");
    if (u.contains("m_tilde")) {
      const json& m = u.at("m_tilde");
      if (m.is_string() && m.get<std::string>() == "predictors") {
        c.unfold.dimension_mode = DimensionMode::Predictors;
      } else if (m.is_string() && m.get<std::string>() == "otsu") {
        c.unfold.dimension_mode = DimensionMode::Otsu;
      } else if (m.is_number_integer()) {
        c.unfold.dimension_mode = DimensionMode::Fixed;
        c.unfold.m_tilde = m.get<Index>();
        if (c.unfold.m_tilde < 1) config_error("unfold.m_tilde must be positive");
      } else {
        config_error("unfold.m_tilde must be \"predictors\", \"otsu\" or a positive integer");
      }
    }
    std::string rule = to_string(c.unfold.rule);
    read(u, "rule", rule, "unfold");
    if (rule == "union") c.unfold.rule = NeighborRule::Union;
    else if (rule == "mutual") c.unfold.rule = NeighborRule::Mutual;
    else config_error("unfold.rule must be union or mutual");
    if (u.contains("methods")) {
      std::vector<std::string> names;
      read(u, "methods", names, "unfold");
      if (names.empty()) config_error("unfold.methods must not be empty");
      c.methods.clear();
      for (const auto& n : names) c.methods.push_back(parse_method(n));
    }
  }
  if (c.unfold.k < 1) config_error("unfold.k must be positive");
  if (!(c.unfold.alpha >= 1.0) || !std::isfinite(c.unfold.alpha)) config_error("unfold.alpha must be >= 1");

  if (doc.contains("regression")) {
    const json& r = doc.at("regression");
    check_keys(r, {"lambda"}, "regression");
    read(r, "lambda", c.lambda, "regression");
  }
  if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) config_error("regression.lambda must be finite and >= 0");

  if (doc.contains("optimizer")) {
    const json& o = doc.at("optimizer");
    check_keys(o,
               {"budget", "initial_temperature", "visiting_parameter", "acceptance_parameter", "restarts",
                "restart_temperature_ratio", "margin", "local_polish", "nominal_evaluations", "write_trace"},
               "optimizer");
    auto& s = c.optimizer;
    read(o, "budget", s.budget, "optimizer");
    read(o, "initial_temperature", s.initial_temperature, "optimizer");
    read(o, "visiting_parameter", s.visiting_parameter, "optimizer");
    read(o, "acceptance_parameter", s.acceptance_parameter, "optimizer");
    read(o, "restarts", s.restarts, "optimizer");
    read(o, "restart_temperature_ratio", s.restart_temperature_ratio, "optimizer");
    read(o, "margin", s.margin, "optimizer");
    read(o, "local_polish", s.local_polish, "optimizer");
    read(o, "nominal_evaluations", s.nominal_evaluations, "optimizer");
    read(o, "write_trace", s.write_trace, "optimizer");
  }
  {
    const auto& s = c.optimizer;
    if (s.budget < 1) config_error("optimizer.budget must be at least 1");
    if (!(s.initial_temperature > 0.0)) config_error("optimizer.initial_temperature must be positive");
    if (!(s.visiting_parameter > 1.0 && s.visiting_parameter < 3.0))
      config_error("optimizer.visiting_parameter must lie in (1, 3)");
    if (!(s.acceptance_parameter < 1.0)) config_error("optimizer.acceptance_parameter must be below 1");
    if (s.restarts < 0) config_error("optimizer.restarts must be nonnegative");
    if (!(s.restart_temperature_ratio > 0.0 && s.restart_temperature_ratio < 1.0))
      config_error("optimizer.restart_temperature_ratio must lie in (0, 1)");
    if (!(s.margin >= 0.0) || !std::isfinite(s.margin)) config_error("optimizer.margin must be finite and >= 0");
    if (s.nominal_evaluations < 3) config_error("optimizer.nominal_evaluations must be at least 3");
  }

  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    check_keys(s,
               {"algorithm", "equality_tol", "psd_tol", "dual_tol", "gap_tol", "max_iterations",
                "max_interior_iterations"},
               "solver");
    std::string algorithm = to_string(c.solver.algorithm);
    read(s, "algorithm", algorithm, "solver");
    if (algorithm == "interior-point") c.solver.algorithm = SdpAlgorithm::InteriorPoint;
    else if (algorithm == "admm") c.solver.algorithm = SdpAlgorithm::Admm;
    else config_error("solver.algorithm must be interior-point or admm");
    read(s, "equality_tol", c.solver.equality, "solver");
    read(s, "psd_tol", c.solver.psd, "solver");
    read(s, "dual_tol", c.solver.dual, "solver");
    read(s, "gap_tol", c.solver.gap, "solver");
    read(s, "max_iterations", c.solver.max_iterations, "solver");
    read(s, "max_interior_iterations", c.solver.max_interior_iterations, "solver");
  }
  for (double t : {c.solver.equality, c.solver.psd, c.solver.dual, c.solver.gap})
    if (!(t > 0.0)) config_error("solver tolerances must be positive");
  if (c.solver.max_iterations < 1 || c.solver.max_interior_iterations < 1)
    config_error("solver iteration limits must be positive");
  return c;
}

json to_json(const RunConfig& c, bool include_output_dir) {
  json doc;
  doc["seed"] = c.seed;
  if (include_output_dir) doc["output_dir"] = c.output_dir;
  json d;
  d["kind"] = c.data.kind;
  d["preset"] = c.data.preset;
  d["sample_count"] = c.data.sample_count ? json(*c.data.sample_count) : json(nullptr);
  d["grid_size"] = c.data.grid_size ? json(*c.data.grid_size) : json(nullptr);
  d["bracket_points"] = c.data.bracket_points ? json(*c.data.bracket_points) : json(nullptr);
  d["control_low"] = c.data.control_low;
  d["control_high"] = c.data.control_high;
  d["base_asset"] = c.data.base_asset ? json(*c.data.base_asset) : json(nullptr);
  d["x_csv"] = c.data.x_csv ? json(*c.data.x_csv) : json(nullptr);
  d["y_csv"] = c.data.y_csv ? json(*c.data.y_csv) : json(nullptr);
  d["ambient_dim"] = c.data.ambient_dim;
  d["nominal_controls"] = c.data.nominal_controls ? json(*c.data.nominal_controls) : json(nullptr);
  d["nominal_csv"] = c.data.nominal_csv ? json(*c.data.nominal_csv) : json(nullptr);
  doc["data"] = d;

  json u;
  u["k"] = c.unfold.k;
  u["alpha"] = c.unfold.alpha;
  if (c.unfold.dimension_mode == DimensionMode::Fixed) u["m_tilde"] = c.unfold.m_tilde;
  else u["m_tilde"] = dimension_text(c.unfold);
  u["rule"] = to_string(c.unfold.rule);
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(method_name(m));
  u["methods"] = methods;
  doc["unfold"] = u;

  doc["regression"] = json{{"lambda", c.lambda}};

  const auto& s = c.optimizer;
  doc["optimizer"] = json{{"budget", s.budget},
                          {"initial_temperature", s.initial_temperature},
                          {"visiting_parameter", s.visiting_parameter},
                          {"acceptance_parameter", s.acceptance_parameter},
                          {"restarts", s.restarts},
                          {"restart_temperature_ratio", s.restart_temperature_ratio},
                          {"margin", s.margin},
                          {"local_polish", s.local_polish},
                          {"nominal_evaluations", s.nominal_evaluations},
                          {"write_trace", s.write_trace}};
  doc["solver"] = json{{"algorithm", to_string(c.solver.algorithm)},
                       {"equality_tol", c.solver.equality},
                       {"psd_tol", c.solver.psd},
                       {"dual_tol", c.solver.dual},
                       {"gap_tol", c.solver.gap},
                       {"max_iterations", c.solver.max_iterations},
                       {"max_interior_iterations", c.solver.max_interior_iterations}};
  return doc;
}

RunConfig load_config(const std::string& path) {
  const std::string text = io::read_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error("cannot parse " + path + ": " + e.what());
  }
  return parse_config(doc);
}

void apply_environment(RunConfig& config, std::optional<Method>& method) {
  if (const char* seed = std::getenv("MCU_SEED"); seed && *seed) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(seed, &end, 10);
    if (!end || *end != '\0') config_error("MCU_SEED must be a nonnegative integer");
    config.seed = v;
  }
  if (const char* out = std::getenv("MCU_OUTPUT"); out && *out) config.output_dir = out;
  if (const char* m = std::getenv("MCU_METHOD"); m && *m) method = parse_method(m);
}

Prepared prepare(const RunConfig& config) {
  Prepared p;
  if (config.data.kind == "files") {
    p.X_raw = io::read_csv(*config.data.x_csv).values;
    p.Y_raw = io::read_csv(*config.data.y_csv).values;
    p.ambient_dim = config.data.ambient_dim;
  } else {
    p.dataset = datagen::generate(generator_spec(config));
    p.X_raw = p.dataset->X;
    p.Y_raw = p.dataset->Y;
    p.ambient_dim = p.dataset->ambient_dim;
  }
  if (p.X_raw.rows() != p.Y_raw.rows())
    throw Error(ErrorCode::DimensionMismatch, "X and Y have different sample counts");
  p.X = standardize_covariates(p.X_raw);
  p.Y = center_scale_responses(p.Y_raw, p.ambient_dim);
  return p;
}

FitOutcome fit_method(const Prepared& data, const RunConfig& config, Method method) {
  FitOutcome out;
  out.method = method;
  UnfoldConfig u = config.unfold;
  u.method = method;
  const Index p = data.X.covariates();
  const Index m_tilde = u.dimension_mode == DimensionMode::Predictors ? p
                        : u.dimension_mode == DimensionMode::Fixed    ? u.m_tilde
                                                                      : 0;
  if (method == Method::PCA) {
    out.embedding = pca_embed(data.Y, m_tilde);
  } else {
    out.graph = build_knn_graph(data.Y, u.k, u.rule);
    out.components = static_cast<Index>(connected_components(*out.graph).size());
    const SdpProblem<double> problem = method == Method::MCU ? build_mcu_problem(data.X, data.Y, *out.graph, u)
                                                             : build_mvu_problem(data.Y, *out.graph, u, p);
    out.trace_bound = problem.trace_bound;
    out.solution = solve(problem, config.solver);
    const Eigen::MatrixXd& Q = out.solution->Q;
    for (const auto& c : problem.equalities) {
      if (detail::is_centering(c, Q.rows())) continue;
      out.max_edge_residual =
          std::max(out.max_edge_residual, std::abs(constraint_value(c, Q) - c.rhs) / (1.0 + std::abs(c.rhs)));
    }
    const double tr = Q.trace();
    out.centering_residual = tr > 0.0 ? std::abs(Q.sum()) / tr : std::abs(Q.sum());
    out.embedding = recover_embedding(*out.solution, m_tilde, method);
    for (const auto& w : out.graph->warnings) out.embedding.warnings.push_back(w);
  }
  out.model = fit_ridge(data.X.values, out.embedding.Y_tilde, config.lambda);
  return out;
}

NominalCase nominal_case(const RunConfig& config, const Prepared& data) {
  NominalCase n;
  if (config.data.nominal_controls)
    n.x_true = Eigen::Vector2d((*config.data.nominal_controls)[0], (*config.data.nominal_controls)[1]);
  if (config.data.nominal_csv) {
    const Eigen::MatrixXd row = io::read_csv(*config.data.nominal_csv).values;
    if (row.rows() != 1) throw Error(ErrorCode::ShapeMismatch, "nominal file must hold exactly one response row");
    n.y_raw = row.row(0);
    return n;
  }
  if (!data.dataset) config_error("data.kind = files needs data.nominal_csv for optimize");
  if (!n.x_true)
    n.x_true = datagen::draw_controls(config.seed + kNominalStream, 0, config.data.control_low,
                                      config.data.control_high);
  n.y_raw = datagen::regenerate(*data.dataset, (*n.x_true)(0), (*n.x_true)(1));
  return n;
}

std::optional<std::vector<bool>> deviation_mask(const Prepared& data, const Eigen::RowVectorXd& y_hat,
                                                const Eigen::RowVectorXd& y_nom) {
  if (!data.dataset) return std::nullopt;
  const Index d = data.ambient_dim;
  const Index n = y_hat.size() / d;
  std::vector<bool> keep(static_cast<std::size_t>(n), true);
  if (data.dataset->kind == datagen::Kind::Penny) {
    for (Index i = 0; i < n; ++i) keep[static_cast<std::size_t>(i)] = y_hat(i) != 0.0 || y_nom(i) != 0.0;
    return keep;
  }
  if (data.dataset->kind == datagen::Kind::Bracket) {
    for (Index i = 0; i < n; ++i) keep[static_cast<std::size_t>(i)] = data.dataset->base(i, 0) > datagen::kMinBracketPivot;
    return keep;
  }
  return std::nullopt;
}

OptimizeOutcome optimize_method(const Prepared& data, const RunConfig& config, const Embedding<double>& embedding,
                                const RegressionModel<double>& model, const NominalCase& nominal) {
  OptimizeOutcome out;
  out.target = make_target(nominal.y_raw, data.Y, std::min(config.unfold.k, data.Y.samples()));
  out.nominal = infer_nominal_embedding(out.target, embedding, config.optimizer.nominal_evaluations);

  AnnealConfig<double> anneal;
  default_bounds(data.X, anneal, config.optimizer.margin);
  anneal.seed = config.seed;
  anneal.budget = config.optimizer.budget;
  anneal.initial_temperature = config.optimizer.initial_temperature;
  anneal.visiting_parameter = config.optimizer.visiting_parameter;
  anneal.acceptance_parameter = config.optimizer.acceptance_parameter;
  anneal.restarts = config.optimizer.restarts;
  anneal.restart_temperature_ratio = config.optimizer.restart_temperature_ratio;
  anneal.local_polish = config.optimizer.local_polish;
  out.recovery = recover_covariates(out.target, model, embedding, data.X, anneal);

  if (nominal.x_true) out.covariate_deviation = covariate_deviation(out.recovery.x_original, *nominal.x_true);
  if (data.dataset && out.recovery.x_original.size() == 2) {
    const Eigen::RowVectorXd y_hat =
        datagen::regenerate(*data.dataset, out.recovery.x_original(0), out.recovery.x_original(1));
    const Index d = data.ambient_dim;
    out.pointwise = pointwise_deviation(datagen::unflatten(y_hat, d), datagen::unflatten(nominal.y_raw, d),
                                        deviation_mask(data, y_hat, nominal.y_raw));
  }
  return out;
}

void cmd_generate(const RunConfig& config) {
  require_output_dir(config);
  if (config.data.kind == "files") config_error("generate needs a synthetic data.kind (swiss, penny or bracket)");
  Timer timer(config, "generate");
  const Prepared data = prepare(config);
  const datagen::Dataset& d = *data.dataset;
  io::write_csv(path_in(config.output_dir, "X.csv"), d.X, {"c1", "c2"});
  io::write_csv(path_in(config.output_dir, "Y.csv"), d.Y);

  const NominalCase nominal = nominal_case(config, data);
  io::write_csv(path_in(config.output_dir, "nominal_Y.csv"), Eigen::MatrixXd(nominal.y_raw));
  io::write_csv(path_in(config.output_dir, "nominal_X.csv"), Eigen::MatrixXd(nominal.x_true->transpose()), {"c1", "c2"});

  json manifest;
  manifest["kind"] = datagen::to_string(d.kind);
  manifest["seed"] = config.seed;
  manifest["preset"] = config.data.preset;
  manifest["sample_count"] = d.X.rows();
  manifest["points_per_cloud"] = d.points_per_cloud;
  manifest["ambient_dim"] = d.ambient_dim;
  manifest["controls"] = matrix_json(d.X);
  manifest["nominal_controls"] = vector_json(*nominal.x_true);
  manifest["files"] = json{{"X", "X.csv"}, {"Y", "Y.csv"}, {"nominal_Y", "nominal_Y.csv"}, {"nominal_X", "nominal_X.csv"}};
  io::atomic_write(path_in(config.output_dir, "manifest.json"), dump(manifest));
  write_echo(config, "generate", std::nullopt, false);
}

void cmd_fit(const RunConfig& config, std::optional<Method> method, bool allow_nonconverged) {
  require_output_dir(config);
  const Prepared data = prepare(config);
  for (Method m : selected(config, method)) {
    Timer timer(config, "fit " + method_name(m));
    FitOutcome fit = fit_method(data, config, m);
    json solver = nullptr;
    if (fit.solution) {
      const auto& s = *fit.solution;
      if (!s.converged) {
        const std::string diag = "SDP for " + method_name(m) + " stopped with status " + s.status + " after " +
                                 std::to_string(s.iterations) + " iterations (equality residual " +
                                 io::format_double(s.primal_residual) + ", gap " + io::format_double(s.gap) + ")";
        if (!allow_nonconverged) throw Error(ErrorCode::NotConverged, diag + "; rerun with --allow-nonconverged to keep it");
        fit.embedding.warnings.push_back("NotConverged: " + diag);
      }
      solver = json{{"algorithm", to_string(s.algorithm)},
                    {"status", s.status},
                    {"converged", s.converged},
                    {"iterations", s.iterations},
                    {"objective", s.objective_value},
                    {"initial_objective", s.initial_objective},
                    {"equality_residual", s.primal_residual},
                    {"max_edge_residual", fit.max_edge_residual},
                    {"centering_residual", fit.centering_residual},
                    {"trace", s.trace_value},
                    {"trace_bound", fit.trace_bound},
                    {"psd_violation", s.psd_violation},
                    {"dual_residual", s.dual_residual},
                    {"gap", s.gap}};
    }
    json graph = nullptr;
    if (fit.graph)
      graph = json{{"k", fit.graph->k},
                   {"rule", to_string(fit.graph->rule)},
                   {"edges", fit.graph->edges.size()},
                   {"components", fit.components}};

    json model;
    model["method"] = method_name(m);
    model["version"] = kVersion;
    model["m_tilde"] = fit.embedding.m_tilde;
    model["lambda"] = fit.model.lambda;
    model["B_hat"] = matrix_json(fit.model.B_hat);
    model["eigenvalues"] = vector_json(fit.embedding.eigenvalues);
    model["preprocessing"] = json{{"covariate_means", vector_json(data.X.column_means)},
                                  {"covariate_stds", vector_json(data.X.column_stds)},
                                  {"response_scale", data.Y.global_scale},
                                  {"points_per_cloud", data.Y.points_per_cloud},
                                  {"ambient_dim", data.Y.ambient_dim},
                                  {"response_column_means", vector_json(data.Y.column_means)}};
    model["graph"] = graph;
    model["solver"] = solver;
    model["warnings"] = fit.embedding.warnings;
    model["embedding_file"] = "embedding_" + method_name(m) + ".csv";

    io::write_csv(path_in(config.output_dir, "embedding_" + method_name(m) + ".csv"), fit.embedding.Y_tilde,
                  numbered("y", fit.embedding.Y_tilde.cols()));
    io::atomic_write(path_in(config.output_dir, "model_" + method_name(m) + ".json"), dump(model));
  }
  write_echo(config, "fit", method, allow_nonconverged);
}

void cmd_optimize(const RunConfig& config, std::optional<Method> method) {
  require_output_dir(config);
  const Prepared data = prepare(config);
  const NominalCase nominal = nominal_case(config, data);
  for (Method m : selected(config, method)) {
    Timer timer(config, "optimize " + method_name(m));
    const Bundle bundle = load_bundle(config, m);
    const OptimizeOutcome o = optimize_method(data, config, bundle.embedding, bundle.model, nominal);

    json report;
    report["method"] = method_name(m);
    report["x_star"] = vector_json(o.recovery.x_original);
    report["x_star_standardized"] = vector_json(o.recovery.x_standardized);
    report["objective"] = o.recovery.objective;
    report["evaluations"] = o.recovery.evaluations;
    report["budget_exhausted"] = o.recovery.budget_exhausted;
    report["warnings"] = o.recovery.warnings;
    json idx = json::array();
    for (Index i : o.target.neighbor_indices) idx.push_back(i);
    report["neighbor_indices"] = idx;
    report["target_distances"] = vector_json(o.target.target_distances);
    report["nominal_embedding"] = json{{"y_tilde", vector_json(o.nominal.y_tilde)},
                                       {"objective", o.nominal.objective},
                                       {"evaluations", o.nominal.evaluations}};
    report["x_nom"] = nominal.x_true ? vector_json(*nominal.x_true) : json(nullptr);
    report["covariate_deviation"] = o.covariate_deviation ? json(*o.covariate_deviation) : json(nullptr);
    if (o.pointwise && o.pointwise->size() > 0) {
      const std::string name = "pointwise_" + method_name(m) + ".csv";
      io::write_csv(path_in(config.output_dir, name), Eigen::MatrixXd(*o.pointwise), {"deviation"});
      report["pointwise_deviation_file"] = name;
      report["pointwise_deviation_summary"] = summary_json(summarize(*o.pointwise));
    } else {
      report["pointwise_deviation_file"] = nullptr;
      report["pointwise_deviation_summary"] = nullptr;
    }
    if (config.optimizer.write_trace) {
      Eigen::MatrixXd trace(static_cast<Index>(o.recovery.trace.size()), 3);
      for (std::size_t i = 0; i < o.recovery.trace.size(); ++i) {
        const auto& row = o.recovery.trace[i];
        trace.row(static_cast<Index>(i)) << double(row.evaluation), row.temperature, row.incumbent;
      }
      io::write_csv(path_in(config.output_dir, "anneal_trace_" + method_name(m) + ".csv"), trace,
                    {"evaluation", "temperature", "incumbent"});
    }
    io::atomic_write(path_in(config.output_dir, "optimize_" + method_name(m) + ".json"), dump(report));
  }
  write_echo(config, "optimize", method, false);
}

void cmd_compare(const RunConfig& config) {
  require_output_dir(config);
  Timer timer(config, "compare");
  const Prepared data = prepare(config);
  std::vector<std::string> labels;
  std::vector<SummaryStats<double>> stats;
  json methods;
  std::ostringstream quartiles;
  quartiles << "method,count,min,q1,median,q3,max,mean\n";
  for (Method m : config.methods) {
    const Bundle bundle = load_bundle(config, m);
    if (bundle.embedding.Y_tilde.rows() != data.X.samples())
      throw Error(ErrorCode::MissingBundle, "bundle for " + method_name(m) + " was fitted on different data");
    const Eigen::VectorXd per_sample =
        rre_rows(bundle.embedding.Y_tilde, predict_batch(bundle.model, data.X.values));
    const std::string rre_name = "rre_" + method_name(m) + ".csv";
    io::write_csv(path_in(config.output_dir, rre_name), Eigen::MatrixXd(per_sample), {"rre"});
    // Summaries come from the file just written so the report matches it exactly.
    const Eigen::VectorXd reread = io::read_csv(path_in(config.output_dir, rre_name)).values.col(0);
    const SummaryStats<double> s = summarize(reread);
    labels.push_back(method_name(m));
    stats.push_back(s);
    quartiles << method_name(m) << ',' << s.count << ',' << io::format_double(s.min) << ','
              << io::format_double(s.q1) << ',' << io::format_double(s.median) << ',' << io::format_double(s.q3)
              << ',' << io::format_double(s.max) << ',' << io::format_double(s.mean) << '\n';

    json entry;
    entry["median_rre"] = s.median;
    entry["iqr_rre"] = s.iqr();
    entry["rre_summary"] = summary_json(s);
    entry["per_sample_rre_file"] = rre_name;
    entry["m_tilde"] = bundle.embedding.m_tilde;
    entry["solver"] = bundle.doc.contains("solver") ? bundle.doc.at("solver") : json(nullptr);
    const std::string opt_path = path_in(config.output_dir, "optimize_" + method_name(m) + ".json");
    if (io::exists(opt_path)) {
      const json opt = json::parse(io::read_text(opt_path));
      entry["covariate_deviation"] = opt.at("covariate_deviation");
      entry["pointwise_deviation_summary"] = opt.at("pointwise_deviation_summary");
    } else {
      entry["covariate_deviation"] = nullptr;
      entry["pointwise_deviation_summary"] = nullptr;
    }
    methods[method_name(m)] = entry;
  }
  io::atomic_write(path_in(config.output_dir, "rre_quartiles.csv"), quartiles.str());
  io::atomic_write(path_in(config.output_dir, "rre_boxplot.svg"),
                   boxplot_svg(labels, stats, "Relative reconstruction error"));

  json report;
  report["version"] = kVersion;
  report["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION);
  report["methods"] = methods;
  report["config"] = to_json(config, false);
  io::atomic_write(path_in(config.output_dir, "report.json"), dump(report));
  write_echo(config, "compare", std::nullopt, false);
}

void cmd_replay(const std::string& echo_path, const std::optional<std::string>& output_dir) {
  json echo;
  try {
    echo = json::parse(io::read_text(echo_path));
  } catch (const json::parse_error& e) {
    config_error("cannot parse " + echo_path + ": " + e.what());
  }
  check_keys(echo, {"command", "method", "allow_nonconverged", "config"}, "run echo");
  if (!echo.contains("command") || !echo.contains("config")) config_error("run echo lacks command or config");
  RunConfig config = parse_config(echo.at("config"));
  config.output_dir = output_dir ? *output_dir : fs::path(echo_path).parent_path().string();
  if (config.output_dir.empty()) config.output_dir = ".";
  std::optional<Method> method;
  if (echo.contains("method") && !echo.at("method").is_null()) method = parse_method(echo.at("method").get<std::string>());
  const bool allow = echo.value("allow_nonconverged", false);
  const std::string command = echo.at("command").get<std::string>();
  if (command == "generate") cmd_generate(config);
  else if (command == "fit") cmd_fit(config, method, allow);
  else if (command == "optimize") cmd_optimize(config, method);
  else if (command == "compare") cmd_compare(config);
  else config_error("run echo names unknown command '" + command + "'");
}

std::string boxplot_svg(const std::vector<std::string>& labels, const std::vector<SummaryStats<double>>& stats,
                        const std::string& title) {
  constexpr double width = 120.0 * 4, height = 320.0, left = 60.0, top = 40.0, bottom = 40.0;
  const double plot_h = height - top - bottom;
  double hi = 0.0;
  for (const auto& s : stats) hi = std::max(hi, s.max);
  if (!(hi > 0.0)) hi = 1.0;
  auto y = [&](double v) { return top + plot_h * (1.0 - v / hi); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(top + plot_h) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + plot_h) << "\" x2=\"" << num(width - 10) << "\" y2=\""
      << num(top + plot_h) << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = hi * t / 4.0;
    svg << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y(v) + 4) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  const double slot = (width - left - 10) / double(std::max<std::size_t>(stats.size(), 1));
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& s = stats[i];
    const double cx = left + slot * (double(i) + 0.5), half = slot * 0.2;
    svg << "<line x1=\"" << num(cx) << "\" y1=\"" << num(y(s.max)) << "\" x2=\"" << num(cx) << "\" y2=\""
        << num(y(s.min)) << "\" stroke=\"black\"/>\n";
    svg << "<rect x=\"" << num(cx - half) << "\" y=\"" << num(y(s.q3)) << "\" width=\"" << num(2 * half)
        << "\" height=\"" << num(y(s.q1) - y(s.q3)) << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << num(cx - half) << "\" y1=\"" << num(y(s.median)) << "\" x2=\"" << num(cx + half)
        << "\" y2=\"" << num(y(s.median)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double v : {s.min, s.max})
      svg << "<line x1=\"" << num(cx - half / 2) << "\" y1=\"" << num(y(v)) << "\" x2=\"" << num(cx + half / 2)
          << "\" y2=\"" << num(y(v)) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << num(cx) << "\" y=\"" << num(height - 15) << "\" text-anchor=\"middle\">" << labels[i]
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace mcu::pipeline
