#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "otcr/matrix.hpp"

namespace otcr {

struct CausalDataset {
  Matrix x;
  std::vector<int> t;
  std::vector<double> yf;
  std::optional<std::vector<double>> ycf;
  std::optional<std::vector<double>> mu0;
  std::optional<std::vector<double>> mu1;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t size() const noexcept { return t.size(); }
  std::size_t dim() const noexcept { return x.cols(); }
  std::size_t treated_count() const noexcept;
  double treated_fraction() const noexcept;

  // True effect: mu1 - mu0 when present, otherwise derived from ycf.
  bool has_tau() const noexcept { return (mu0 && mu1) || ycf.has_value(); }
  std::vector<double> tau() const;

  // Shape and value checks; throws DataError. `require_both_groups` enforces
  // non-empty treated and control sets.
  void validate(bool require_both_groups = true) const;
  CausalDataset subset(std::span<const std::size_t> idx) const;
};

struct SyntheticSpec {
  std::size_t n = 2000;
  std::size_t d = 10;
  double gamma = 0.0;     // selection strength
  bool quadratic = true;  // add pairwise interaction terms to the outcomes
  double sigma = 0.5;     // outcome noise
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

// X ~ N(0, I); e(x) = sigmoid(gamma <w, x>) with a seeded unit vector w;
// t ~ Bernoulli(e(x)). Outcome surfaces are seeded smooth functions with a
// heterogeneous effect. Retries with a derived seed (up to 10 times) when a
// group comes out empty, then throws DataError.
CausalDataset generate_synthetic(const SyntheticSpec& spec);

// CSV with header x0..x{d-1},t,yf[,ycf][,mu0,mu1]. Row numbers in errors
// are 1-based file lines (the header is line 1).
CausalDataset read_csv(std::istream& in);
CausalDataset load_csv(const std::string& path);
void write_csv(const CausalDataset& ds, std::ostream& out);
void write_csv(const CausalDataset& ds, const std::string& path);

struct SplitSpec {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
  bool stratify = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Within each treatment group: shuffle, then take round_half_up(ratio * size)
// for train and val, the rest for test. Index lists are returned sorted.
// Throws DataError when some split would miss a group.
SplitIndices split(const CausalDataset& ds, const SplitSpec& spec);

// Column-wise affine standardisation fitted on one matrix, applied to others.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
};

}  // namespace otcr
