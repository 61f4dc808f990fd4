#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "mcu/core_data.hpp"

namespace mcu::datagen {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Kind { Swiss, Penny, Bracket };

const char* to_string(Kind kind);
Kind parse_kind(const std::string& name);

struct GeneratorSpec {
  Kind kind = Kind::Swiss;
  Index sample_count = 60;
  std::uint64_t seed = 0;
  MatrixXd controls;  // N x 2; drawn uniformly on [control_low, control_high] when empty
  double control_low = 1.0;
  double control_high = 10.0;

  // Swiss roll base plane: grid_size x grid_size over the two ranges.
  Index grid_size = 40;
  double plane_x_low = 4.0, plane_x_high = 16.0;
  double plane_y_low = 0.0, plane_y_high = 20.0;

  Index bracket_points = 10000;
  std::optional<std::string> base_asset;  // PGM/CSV penny image or XYZ bracket cloud

  /// Desk-scale presets used by the acceptance suite: N=60, 20x20 swiss
  /// grid, 2,000 bracket points.
  static GeneratorSpec desk(Kind kind, std::uint64_t seed);
  /// Full-size settings: swiss N=200 on 40x40, penny N=100, bracket 10,000 points.
  static GeneratorSpec paper_scale(Kind kind, std::uint64_t seed);
};

struct Dataset {
  Kind kind = Kind::Swiss;
  MatrixXd X;  // N x 2 controls (c1, c2)
  MatrixXd Y;  // N x (n*d), point-major flattening
  Index points_per_cloud = 0;
  Index ambient_dim = 1;
  MatrixXd base;  // swiss: base plane (n x 2); penny: 55x55 image; bracket: nominal cloud (n x 3)
};

/// Uniform controls for sample `index` of the stream rooted at `seed`.
Eigen::Vector2d draw_controls(std::uint64_t seed, Index index, double low, double high);
MatrixXd draw_control_matrix(std::uint64_t seed, Index count, double low, double high);

// Swiss roll ---------------------------------------------------------------

MatrixXd swiss_base_plane(const GeneratorSpec& spec);
/// Maps every base-plane point with controls (c1, c2); returns n x 3.
MatrixXd swiss_roll_cloud(const MatrixXd& base_plane, double c1, double c2);
Dataset gen_swiss_roll(const GeneratorSpec& spec);

// Penny --------------------------------------------------------------------

constexpr Index kPennySide = 55;

double penny_rotation_degrees(double c1);
Eigen::Vector2d penny_translation(double c2, double side = double(kPennySide));
/// Rotates counterclockwise about the exact image center, then translates
/// (x right, y up, pixel units); bilinear resampling with zero fill.
MatrixXd transform_image(const MatrixXd& image, double degrees, const Eigen::Vector2d& shift);
MatrixXd penny_image(const MatrixXd& base, double c1, double c2);
Dataset gen_penny(const GeneratorSpec& spec);

// Bracket ------------------------------------------------------------------

double bracket_pivot(double c2);
/// Bends every point with x > pivot; returns n x 3.
MatrixXd bracket_cloud(const MatrixXd& nominal, double c1, double c2);
Dataset gen_bracket(const GeneratorSpec& spec);

/// Smallest pivot reachable with controls in [1, 10].
constexpr double kMinBracketPivot = 1.15;

// Base assets --------------------------------------------------------------

MatrixXd synthetic_penny_image();
MatrixXd synthetic_bracket_cloud(Index points = 10000);

MatrixXd load_penny_image(const std::string& path);  // PGM (P2/P5) or CSV grid
MatrixXd load_point_cloud(const std::string& path);  // whitespace-separated XYZ
void save_point_cloud(const std::string& path, const MatrixXd& cloud);

/// Runs the generator selected by spec.kind.
Dataset generate(const GeneratorSpec& spec);

/// Single response (flattened row) for arbitrary controls, using the same
/// base asset as `dataset`.
Eigen::RowVectorXd regenerate(const Dataset& dataset, double c1, double c2);

/// Flattened row <-> n x d cloud.
MatrixXd unflatten(const Eigen::RowVectorXd& row, Index dim);
Eigen::RowVectorXd flatten(const MatrixXd& cloud);

}  // namespace mcu::datagen
