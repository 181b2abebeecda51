#pragma once

// Embedding matrices: headerless CSV, one float row per point. An optional sidecar
// `<file>.json` of the form {"model": "lorentz", "curvature": K} marks the rows as
// Lorentz ambient coordinates [time, space...].

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <vector>

#include "lorentzkit/manifold.hpp"

namespace lorentzkit {

struct EmbeddingMatrix {
  Eigen::MatrixXd rows;
  std::optional<double> curvature;  // set when the sidecar declares Lorentz rows
};

std::filesystem::path sidecar_path(const std::filesystem::path& csv);

// Rejects ragged rows, non-numeric cells and non-finite values, naming the 1-based row.
EmbeddingMatrix read_embedding(const std::filesystem::path& csv);
// Shortest round-trip decimal formatting; writes the sidecar when curvature is set.
void write_embedding(const std::filesystem::path& csv, const Eigen::MatrixXd& rows,
                     std::optional<double> curvature = std::nullopt);

// 0-based indices of rows with |<p,p>_L - 1/K| > tol (relative to max(1, p_t^2)) or p_t <= 0.
std::vector<std::size_t> off_manifold_rows(const Eigen::MatrixXd& rows, Curvature k, double tol);

std::vector<LorentzPoint> embedding_points(const EmbeddingMatrix& m);

}  // namespace lorentzkit
