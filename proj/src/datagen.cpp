#include "mcu/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "mcu/io.hpp"

namespace mcu::datagen {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// 53-bit uniform in [0, 1); independent of the standard library's
// distribution implementations so streams are portable.
double unit(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

double smooth_step(double edge0, double edge1, double v) {
  const double t = std::clamp((v - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double t = std::clamp(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(px - ax - t * dx, py - ay - t * dy);
}

void require_penny_shape(const MatrixXd& image) {
  if (image.rows() != kPennySide || image.cols() != kPennySide)
    throw Error(ErrorCode::BadBaseImage, "penny image must be 55x55, got " + std::to_string(image.rows()) + "x" +
                                             std::to_string(image.cols()));
  if (!image.allFinite()) throw Error(ErrorCode::BadBaseImage, "penny image has non-finite pixels");
}

MatrixXd controls_for(const GeneratorSpec& spec) {
  if (spec.controls.size() > 0) {
    if (spec.controls.cols() != 2 || spec.controls.rows() != spec.sample_count)
      throw Error(ErrorCode::InvalidArgument, "controls must be sample_count x 2");
    if ((spec.controls.array() < spec.control_low).any() || (spec.controls.array() > spec.control_high).any())
      throw Error(ErrorCode::InvalidArgument, "controls outside the declared bounds");
    return spec.controls;
  }
  return draw_control_matrix(spec.seed, spec.sample_count, spec.control_low, spec.control_high);
}

void require_kind(const GeneratorSpec& spec, Kind kind) {
  if (spec.kind != kind) throw Error(ErrorCode::InvalidArgument, "generator spec kind mismatch");
  if (spec.sample_count < 1) throw Error(ErrorCode::InvalidArgument, "sample_count must be positive");
}

}  // namespace

const char* to_string(Kind kind) {
  switch (kind) {
    case Kind::Swiss: return "swiss";
    case Kind::Penny: return "penny";
    case Kind::Bracket: return "bracket";
  }
  return "?";
}

Kind parse_kind(const std::string& name) {
  if (name == "swiss") return Kind::Swiss;
  if (name == "penny") return Kind::Penny;
  if (name == "bracket") return Kind::Bracket;
  throw Error(ErrorCode::ConfigError, "unknown data kind '" + name + "' (expected swiss|penny|bracket)");
}

GeneratorSpec GeneratorSpec::desk(Kind kind, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.sample_count = 60;
  spec.grid_size = 20;
  spec.bracket_points = 2000;
  return spec;
}

GeneratorSpec GeneratorSpec::paper_scale(Kind kind, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.sample_count = kind == Kind::Swiss ? 200 : 100;
  spec.grid_size = 40;
  spec.bracket_points = 10000;
  return spec;
}

Eigen::Vector2d draw_controls(std::uint64_t seed, Index index, double low, double high) {
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 0x5EEDULL)));
  const double a = unit(rng);
  const double b = unit(rng);
  return {low + (high - low) * a, low + (high - low) * b};
}

MatrixXd draw_control_matrix(std::uint64_t seed, Index count, double low, double high) {
  MatrixXd out(count, 2);
  for (Index i = 0; i < count; ++i) out.row(i) = draw_controls(seed, i, low, high).transpose();
  return out;
}

// ---------------------------------------------------------------------------

MatrixXd swiss_base_plane(const GeneratorSpec& spec) {
  const Index g = spec.grid_size;
  if (g < 2) throw Error(ErrorCode::InvalidArgument, "grid_size must be at least 2");
  MatrixXd plane(g * g, 2);
  for (Index a = 0; a < g; ++a) {
    for (Index b = 0; b < g; ++b) {
      const double x = spec.plane_x_low + (spec.plane_x_high - spec.plane_x_low) * double(a) / double(g - 1);
      const double y = spec.plane_y_low + (spec.plane_y_high - spec.plane_y_low) * double(b) / double(g - 1);
      plane.row(a * g + b) << x, y;
    }
  }
  return plane;
}

MatrixXd swiss_roll_cloud(const MatrixXd& base_plane, double c1, double c2) {
  const double radial = 4.0 / 9.0 * c1 + 50.0 / 9.0;
  const double fold_rate = 1.0 + c2 / 10.0;
  MatrixXd cloud(base_plane.rows(), 3);
  for (Index p = 0; p < base_plane.rows(); ++p) {
    const double x = base_plane(p, 0);
    const double angle = 2.0 * std::numbers::pi * fold_rate * (x - 4.0) / 12.0;
    cloud.row(p) << radial * x * std::cos(angle), base_plane(p, 1), radial * x * std::sin(angle);
  }
  return cloud;
}

Dataset gen_swiss_roll(const GeneratorSpec& spec) {
  require_kind(spec, Kind::Swiss);
  Dataset d;
  d.kind = Kind::Swiss;
  d.X = controls_for(spec);
  d.base = swiss_base_plane(spec);
  d.points_per_cloud = d.base.rows();
  d.ambient_dim = 3;
  d.Y.resize(spec.sample_count, d.points_per_cloud * 3);
  for (Index i = 0; i < spec.sample_count; ++i) d.Y.row(i) = flatten(swiss_roll_cloud(d.base, d.X(i, 0), d.X(i, 1)));
  return d;
}

// ---------------------------------------------------------------------------

double penny_rotation_degrees(double c1) { return -4.0 * (c1 - 5.0); }

Eigen::Vector2d penny_translation(double c2, double side) {
  return Eigen::Vector2d((c2 - 5.0) * side / 40.0, side / 8.0 * std::sin(std::numbers::pi * (c2 - 5.0) / 10.0)) / 10.0;
}

MatrixXd transform_image(const MatrixXd& image, double degrees, const Eigen::Vector2d& shift) {
  const Index rows = image.rows(), cols = image.cols();
  const double cx = double(cols - 1) / 2.0;
  const double cy = double(rows - 1) / 2.0;
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = degrees == 0.0 ? 1.0 : std::cos(theta);
  const double s = degrees == 0.0 ? 0.0 : std::sin(theta);

  auto pixel = [&](Index r, Index q) -> double {
    if (r < 0 || r >= rows || q < 0 || q >= cols) return 0.0;
    return image(r, q);
  };

  MatrixXd out(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index q = 0; q < cols; ++q) {
      // Output pixel in centered (x right, y up) coordinates, pulled back
      // through the translation then the rotation.
      const double x = double(q) - cx - shift.x();
      const double y = cy - double(r) - shift.y();
      const double xs = c * x + s * y;
      const double ys = -s * x + c * y;
      const double col = xs + cx;
      const double row = cy - ys;
      const double r0 = std::floor(row), q0 = std::floor(col);
      const double fr = row - r0, fq = col - q0;
      const auto ri = static_cast<Index>(r0), qi = static_cast<Index>(q0);
      out(r, q) = (1 - fr) * ((1 - fq) * pixel(ri, qi) + fq * pixel(ri, qi + 1)) +
                  fr * ((1 - fq) * pixel(ri + 1, qi) + fq * pixel(ri + 1, qi + 1));
    }
  }
  return out;
}

MatrixXd penny_image(const MatrixXd& base, double c1, double c2) {
  require_penny_shape(base);
  return transform_image(base, penny_rotation_degrees(c1), penny_translation(c2, double(base.rows())));
}

Dataset gen_penny(const GeneratorSpec& spec) {
  require_kind(spec, Kind::Penny);
  Dataset d;
  d.kind = Kind::Penny;
  d.X = controls_for(spec);
  d.base = spec.base_asset ? load_penny_image(*spec.base_asset) : synthetic_penny_image();
  require_penny_shape(d.base);
  d.points_per_cloud = kPennySide * kPennySide;
  d.ambient_dim = 1;
  d.Y.resize(spec.sample_count, d.points_per_cloud);
  for (Index i = 0; i < spec.sample_count; ++i) {
    const MatrixXd img = penny_image(d.base, d.X(i, 0), d.X(i, 1));
    d.Y.row(i) = img.transpose().reshaped().transpose();  // row-major pixels
  }
  return d;
}

// ---------------------------------------------------------------------------

double bracket_pivot(double c2) { return 1.0 + 0.15 * c2; }

MatrixXd bracket_cloud(const MatrixXd& nominal, double c1, double c2) {
  if (nominal.cols() != 3) throw Error(ErrorCode::BadBaseCloud, "bracket cloud must have 3 columns");
  const double pivot = bracket_pivot(c2);
  const double rate = 1.0 + c1 / 15.0;
  MatrixXd cloud = nominal;
  for (Index p = 0; p < cloud.rows(); ++p) {
    const double x = cloud(p, 0);
    if (x > pivot) cloud(p, 1) += 10.0 * (1.0 - std::cos(rate * (x - pivot) / 4.0));
  }
  return cloud;
}

Dataset gen_bracket(const GeneratorSpec& spec) {
  require_kind(spec, Kind::Bracket);
  Dataset d;
  d.kind = Kind::Bracket;
  d.X = controls_for(spec);
  d.base = spec.base_asset ? load_point_cloud(*spec.base_asset) : synthetic_bracket_cloud(spec.bracket_points);
  if (d.base.cols() != 3 || d.base.rows() != spec.bracket_points)
    throw Error(ErrorCode::BadBaseCloud, "nominal bracket must be " + std::to_string(spec.bracket_points) +
                                             " x 3, got " + std::to_string(d.base.rows()) + " x " +
                                             std::to_string(d.base.cols()));
  d.points_per_cloud = d.base.rows();
  d.ambient_dim = 3;
  d.Y.resize(spec.sample_count, d.points_per_cloud * 3);
  for (Index i = 0; i < spec.sample_count; ++i) d.Y.row(i) = flatten(bracket_cloud(d.base, d.X(i, 0), d.X(i, 1)));
  return d;
}

// ---------------------------------------------------------------------------

MatrixXd synthetic_penny_image() {
  const double center = double(kPennySide - 1) / 2.0;
  const double radius = 24.0;
  MatrixXd img(kPennySide, kPennySide);
  for (Index r = 0; r < kPennySide; ++r) {
    for (Index q = 0; q < kPennySide; ++q) {
      const double x = double(q) - center;
      const double y = center - double(r);
      const double rho = std::hypot(x, y);
      const double inside = std::clamp(radius + 0.5 - rho, 0.0, 1.0);
      if (inside <= 0.0) {
        img(r, q) = 0.0;
        continue;
      }
      double v = 0.40 + 0.15 * (1.0 - rho / radius);
      v += 0.30 * smooth_step(19.5, 21.5, rho);  // raised rim
      // Off-center profile bump.
      v += 0.35 * std::exp(-0.5 * ((x - 5.0) * (x - 5.0) / 36.0 + (y - 4.0) * (y - 4.0) / 64.0));
      // L-shaped embossed glyph in the lower-left quadrant.
      const double glyph = std::min(segment_distance(x, y, -14.0, -10.0, -4.0, -10.0),
                                    segment_distance(x, y, -14.0, -10.0, -14.0, 2.0));
      v += 0.30 * (1.0 - smooth_step(1.0, 2.0, glyph));
      // Small date-like dot.
      v += 0.25 * std::exp(-0.5 * ((x - 11.0) * (x - 11.0) + (y + 12.0) * (y + 12.0)) / 4.0);
      img(r, q) = std::min(1.0, v) * inside;
    }
  }
  return img;
}

MatrixXd synthetic_bracket_cloud(Index points) {
  if (points < 1) throw Error(ErrorCode::InvalidArgument, "bracket point count must be positive");
  constexpr double kPlateLength = 4.0, kWidth = 1.5, kFlangeHeight = 2.0, kHoleRadius = 0.25;
  const double hole_area = std::numbers::pi * kHoleRadius * kHoleRadius;
  const double plate_area = kPlateLength * kWidth - 2.0 * hole_area;
  const double flange_area = kFlangeHeight * kWidth - hole_area;
  const auto plate_points = static_cast<Index>(std::llround(double(points) * plate_area / (plate_area + flange_area)));

  auto in_hole = [&](double u, double v, double cu, double cv) {
    return (u - cu) * (u - cu) + (v - cv) * (v - cv) < kHoleRadius * kHoleRadius;
  };

  std::mt19937_64 rng(0xB7AC4E7ULL);
  MatrixXd cloud(points, 3);
  Index p = 0;
  // Mounting plate in the y = 0 plane with two holes.
  while (p < plate_points) {
    const double x = kPlateLength * unit(rng);
    const double z = kWidth * unit(rng);
    if (in_hole(x, z, 1.0, 0.75) || in_hole(x, z, 3.0, 0.75)) continue;
    cloud.row(p++) << x, 0.0, z;
  }
  // Upright flange in the x = 0 plane with one hole.
  while (p < points) {
    const double y = kFlangeHeight * unit(rng);
    const double z = kWidth * unit(rng);
    if (in_hole(y, z, 1.2, 0.75)) continue;
    cloud.row(p++) << 0.0, y, z;
  }
  return cloud;
}

MatrixXd load_penny_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic == "P2" || magic == "P5") {
    auto next_int = [&]() {
      std::string tok;
      while (in >> tok) {
        if (tok[0] == '#') {
          std::string rest;
          std::getline(in, rest);
          continue;
        }
        return std::stol(tok);
      }
      throw Error(ErrorCode::BadBaseImage, "truncated PGM header in " + path);
    };
    const long width = next_int(), height = next_int(), maxval = next_int();
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
      throw Error(ErrorCode::BadBaseImage, "invalid PGM header in " + path);
    MatrixXd img(height, width);
    if (magic == "P2") {
      for (long r = 0; r < height; ++r)
        for (long q = 0; q < width; ++q) img(r, q) = double(next_int()) / double(maxval);
    } else {
      in.get();  // single whitespace after maxval
      const int bytes = maxval < 256 ? 1 : 2;
      for (long r = 0; r < height; ++r) {
        for (long q = 0; q < width; ++q) {
          int v = in.get();
          if (bytes == 2) v = (v << 8) | in.get();
          if (!in) throw Error(ErrorCode::BadBaseImage, "truncated PGM raster in " + path);
          img(r, q) = double(v) / double(maxval);
        }
      }
    }
    require_penny_shape(img);
    return img;
  }
  if (magic.size() == 2 && magic[0] == 'P')
    throw Error(ErrorCode::BadBaseImage, path + " is not a grayscale PGM (" + magic + ")");
  in.close();
  MatrixXd img = io::read_csv(path).values;
  require_penny_shape(img);
  return img;
}

MatrixXd load_point_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<double> flat;
  Index cols = -1, rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ss(line);
    Index count = 0;
    std::string tok;
    while (ss >> tok) {
      flat.push_back(io::parse_double(tok));
      ++count;
    }
    if (cols < 0) cols = count;
    if (count != cols) throw Error(ErrorCode::BadBaseCloud, "ragged point cloud line in " + path);
    ++rows;
  }
  if (rows == 0) throw Error(ErrorCode::BadBaseCloud, "empty point cloud " + path);
  MatrixXd cloud(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) cloud(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  return cloud;
}

void save_point_cloud(const std::string& path, const MatrixXd& cloud) {
  std::string text;
  for (Index r = 0; r < cloud.rows(); ++r) {
    for (Index c = 0; c < cloud.cols(); ++c) {
      if (c) text += ' ';
      text += io::format_double(cloud(r, c));
    }
    text += '\n';
  }
  io::atomic_write(path, text);
}

Dataset generate(const GeneratorSpec& spec) {
  switch (spec.kind) {
    case Kind::Swiss: return gen_swiss_roll(spec);
    case Kind::Penny: return gen_penny(spec);
    case Kind::Bracket: return gen_bracket(spec);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown generator kind");
}

Eigen::RowVectorXd regenerate(const Dataset& dataset, double c1, double c2) {
  switch (dataset.kind) {
    case Kind::Swiss: return flatten(swiss_roll_cloud(dataset.base, c1, c2));
    case Kind::Penny: {
      const MatrixXd img = penny_image(dataset.base, c1, c2);
      return img.transpose().reshaped().transpose();
    }
    case Kind::Bracket: return flatten(bracket_cloud(dataset.base, c1, c2));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown generator kind");
}

MatrixXd unflatten(const Eigen::RowVectorXd& row, Index dim) {
  if (dim < 1 || row.size() % dim != 0) throw Error(ErrorCode::ShapeMismatch, "row length not a multiple of d");
  return row.reshaped(dim, row.size() / dim).transpose();
}

Eigen::RowVectorXd flatten(const MatrixXd& cloud) { return cloud.transpose().reshaped().transpose(); }

}  // namespace mcu::datagen
