#include "otcr/isp.hpp"

#include <cmath>
#include <string>

#include "otcr/error.hpp"
#include "otcr/linalg.hpp"

namespace otcr {

std::size_t projector_rank(std::size_t d, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio", "must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(d) + 0.5));
  return std::max<std::size_t>(1, std::min(k, d));
}

Projector fit_projector(const Matrix& r, double ratio, bool centered) {
  if (r.rows() == 0 || r.cols() == 0) throw DimensionError("fit_projector: empty representation");
  const std::size_t d = r.cols();
  const std::size_t k = projector_rank(d, ratio);

  Projector out;
  out.ratio = ratio;
  out.centered = centered;
  Matrix data = r;
  if (centered) {
    out.center = col_sums(r);
    for (double& c : out.center) c /= static_cast<double>(r.rows());
    for (std::size_t i = 0; i < data.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) data(i, j) -= out.center[j];
  }

  SvdResult svd = svd_thin(data);
  const std::size_t avail = svd.s.size();  // min(n, d)
  const double tol = 1e-12 * (svd.s.empty() ? 0.0 : svd.s[0]);
  std::size_t rank = 0;
  for (double s : svd.s)
    if (s > tol) ++rank;

  const std::size_t keep = std::min(k, rank);
  out.rank_deficient = keep < k;
  Matrix v = svd.v.left_cols(std::min(k, avail));
  if (out.rank_deficient) v = complete_orthonormal(v.left_cols(keep), k);
  out.basis = std::move(v);

  double residual = 0.0;
  for (std::size_t i = keep; i < rank; ++i) residual += svd.s[i] * svd.s[i];
  out.residual = residual;
  return out;
}

Matrix project(const Matrix& r, const Projector& proj) {
  if (r.cols() != proj.input_dim()) {
    throw DimensionError("project: representation width " + std::to_string(r.cols()) +
                         " != projector input dim " + std::to_string(proj.input_dim()));
  }
  return matmul(r, proj.basis);
}

double reconstruction_residual(const Matrix& r, const Matrix& basis) {
  if (r.cols() != basis.rows()) throw DimensionError("reconstruction_residual: width mismatch");
  const Matrix rec = matmul_nt(matmul(r, basis), basis);
  const double f = frobenius_norm(r - rec);
  return f * f;
}

}  // namespace otcr
