#include "lorentzkit/embedding_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lorentzkit/error.hpp"

namespace lorentzkit {

namespace fs = std::filesystem;

fs::path sidecar_path(const fs::path& csv) { return fs::path(csv.string() + ".json"); }

EmbeddingMatrix read_embedding(const fs::path& csv) {
  std::ifstream f(csv, std::ios::binary);
  if (!f) throw IoError("cannot read embedding file " + csv.string());
  std::vector<double> values;
  std::size_t cols = 0, nrows = 0, lineno = 0;
  std::string line;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t count = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      const std::string t = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      double v = 0.0;
      const char* first = t.data() + (!t.empty() && t[0] == '+' ? 1 : 0);
      auto r = std::from_chars(first, t.data() + t.size(), v);
      if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
        throw ValidationError(csv.string() + ": row " + std::to_string(lineno) + " has non-numeric value '" + t + "'");
      }
      if (!std::isfinite(v)) {
        throw ValidationError(csv.string() + ": row " + std::to_string(lineno) + " contains a non-finite value");
      }
      values.push_back(v);
      ++count;
    }
    if (nrows == 0) cols = count;
    else if (count != cols) {
      throw ValidationError(csv.string() + ": row " + std::to_string(lineno) + " has " + std::to_string(count) +
                            " columns, expected " + std::to_string(cols));
    }
    ++nrows;
  }
  EmbeddingMatrix out;
  out.rows.resize(static_cast<Eigen::Index>(nrows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < nrows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      out.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * cols + j];
    }
  }

  const fs::path side = sidecar_path(csv);
  if (fs::exists(side)) {
    std::ifstream s(side, std::ios::binary);
    if (!s) throw IoError("cannot read " + side.string());
    try {
      const auto j = nlohmann::json::parse(s);
      const std::string model = j.value("model", "lorentz");
      if (model != "lorentz") throw ValidationError(side.string() + ": unsupported model '" + model + "'");
      const double k = j.value("curvature", -1.0);
      Curvature check(k);
      out.curvature = k;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(side.string() + ": " + e.what());
    }
  }
  return out;
}

void write_embedding(const fs::path& csv, const Eigen::MatrixXd& rows, std::optional<double> curvature) {
  std::string text;
  char buf[64];
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j) text += ',';
      auto r = std::to_chars(buf, buf + sizeof buf, rows(i, j));
      text.append(buf, r.ptr);
    }
    text += '\n';
  }
  std::ofstream f(csv, std::ios::binary);
  if (!f) throw IoError("cannot write " + csv.string());
  f << text;
  if (!f) throw IoError("write failed for " + csv.string());
  if (curvature) {
    nlohmann::ordered_json j;
    j["model"] = "lorentz";
    j["curvature"] = *curvature;
    std::ofstream s(sidecar_path(csv), std::ios::binary);
    if (!s) throw IoError("cannot write " + sidecar_path(csv).string());
    s << j.dump() << "\n";
  }
}

std::vector<std::size_t> off_manifold_rows(const Eigen::MatrixXd& rows, Curvature k, double tol) {
  std::vector<std::size_t> bad;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double t = rows(i, 0);
    const double inner = rows.row(i).tail(rows.cols() - 1).squaredNorm() - t * t;
    if (!(t > 0.0) || std::abs(inner - 1.0 / k.k()) > tol * std::max(1.0, t * t)) bad.push_back(static_cast<std::size_t>(i));
  }
  return bad;
}

std::vector<LorentzPoint> embedding_points(const EmbeddingMatrix& m) {
  if (!m.curvature) throw ValidationError("embedding has no Lorentz sidecar");
  if (m.rows.cols() < 2) throw ValidationError("Lorentz rows need at least 2 columns");
  const Curvature k(*m.curvature);
  std::vector<LorentzPoint> pts;
  pts.reserve(static_cast<std::size_t>(m.rows.rows()));
  for (Eigen::Index i = 0; i < m.rows.rows(); ++i) pts.push_back(LorentzPoint::unchecked(m.rows.row(i).transpose(), k));
  return pts;
}

}  // namespace lorentzkit
