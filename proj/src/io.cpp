#include "mcu/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mcu::io {

namespace fs = std::filesystem;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  std::size_t begin = 0, end = text.size();
  while (begin < end && (text[begin] == ' ' || text[begin] == '\t')) ++begin;
  while (end > begin && (text[end - 1] == ' ' || text[end - 1] == '\t' || text[end - 1] == '\r')) --end;
  if (begin < end && text[begin] == '+') ++begin;
  double value = 0.0;
  const auto res = std::from_chars(text.data() + begin, text.data() + end, value);
  if (res.ec != std::errc() || res.ptr != text.data() + end)
    throw Error(ErrorCode::InvalidArgument, "not a number: '" + text + "'");
  return value;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool numeric(const std::string& s) {
  try {
    parse_double(s);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

CsvMatrix read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  CsvMatrix out;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (first) {
      first = false;
      width = fields.size();
      bool all_numeric = true;
      for (const auto& f : fields) all_numeric = all_numeric && numeric(f);
      if (!all_numeric) {
        out.header = fields;
        continue;
      }
    }
    if (fields.size() != width)
      throw Error(ErrorCode::IoError, path + ":" + std::to_string(line_no) + ": ragged row (" +
                                          std::to_string(fields.size()) + " fields, expected " +
                                          std::to_string(width) + ")");
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      try {
        row[c] = parse_double(fields[c]);
      } catch (const Error&) {
        throw Error(ErrorCode::IoError, path + ":" + std::to_string(line_no) + ": bad number '" + fields[c] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

std::string csv_text(const Eigen::MatrixXd& values, const std::vector<std::string>& header) {
  std::string text;
  if (!header.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c) text += ',';
      text += header[c];
    }
    text += '\n';
  }
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) text += ',';
      text += format_double(values(r, c));
    }
    text += '\n';
  }
  return text;
}

void write_csv(const std::string& path, const Eigen::MatrixXd& values, const std::vector<std::string>& header) {
  atomic_write(path, csv_text(values, header));
}

void atomic_write(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  const fs::path parent = target.has_parent_path() ? target.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) throw Error(ErrorCode::IoError, "directory does not exist: " + parent.string());
  const fs::path tmp = parent / ("." + target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename onto " + path + ": " + ec.message());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool exists(const std::string& path) { return fs::exists(path); }
bool is_directory(const std::string& path) { return fs::is_directory(path); }

}  // namespace mcu::io
