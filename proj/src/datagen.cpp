#include "otcr/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "otcr/error.hpp"
#include "otcr/rng.hpp"

namespace otcr {

namespace {

constexpr int kMaxAttempts = 10;

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

std::size_t round_half_up(double v) { return static_cast<std::size_t>(std::floor(v + 0.5)); }

void require_len(const std::optional<std::vector<double>>& v, std::size_t n, const char* name) {
  if (v && v->size() != n) throw DataError(std::string("dataset column ") + name + " has wrong length");
}

// Coefficients of the outcome surfaces, drawn once per seed.
struct Surfaces {
  std::vector<double> beta0, beta_tau, w;
  std::size_t p = 0, q = 1, r = 0;
  double c0 = 0.0, c_tau = 0.0;
};

Surfaces draw_surfaces(const SyntheticSpec& s, SeededRng rng) {
  Surfaces f;
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.d));
  f.beta0.resize(s.d);
  f.beta_tau.resize(s.d);
  f.w.resize(s.d);
  for (double& b : f.beta0) b = rng.normal() * scale;
  for (double& b : f.beta_tau) b = rng.normal() * scale;
  double norm = 0.0;
  for (double& v : f.w) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : f.w) v /= norm;
  f.p = rng.below(s.d);
  f.q = (f.p + 1 + rng.below(s.d - 1)) % s.d;
  f.r = rng.below(s.d);
  f.c0 = 0.5 + 0.5 * rng.uniform();
  f.c_tau = 0.5 + 0.5 * rng.uniform();
  return f;
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) cells.push_back(cur);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    auto b = c.find_first_not_of(" \t\r");
    auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last) throw ParseError("not a number: '" + cell + "'", row, col);
  if (!std::isfinite(v)) throw ParseError("non-finite value", row, col);
  return v;
}

}  // namespace

std::size_t CausalDataset::treated_count() const noexcept {
  return static_cast<std::size_t>(std::count(t.begin(), t.end(), 1));
}

double CausalDataset::treated_fraction() const noexcept {
  return t.empty() ? 0.0 : static_cast<double>(treated_count()) / static_cast<double>(t.size());
}

std::vector<double> CausalDataset::tau() const {
  const std::size_t n = size();
  std::vector<double> out(n);
  if (mu0 && mu1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = (*mu1)[i] - (*mu0)[i];
  } else if (ycf) {
    for (std::size_t i = 0; i < n; ++i) out[i] = t[i] ? yf[i] - (*ycf)[i] : (*ycf)[i] - yf[i];
  } else {
    throw DataError("dataset carries no counterfactual truth");
  }
  return out;
}

void CausalDataset::validate(bool require_both_groups) const {
  const std::size_t n = size();
  if (x.rows() != n || yf.size() != n) throw DataError("dataset columns have inconsistent lengths");
  require_len(ycf, n, "ycf");
  require_len(mu0, n, "mu0");
  require_len(mu1, n, "mu1");
  if (mu0.has_value() != mu1.has_value()) throw DataError("mu0 and mu1 must be present together");
  for (int v : t)
    if (v != 0 && v != 1) throw DataError("treatment indicator outside {0,1}");
  if (!x.all_finite()) throw DataError("non-finite covariate");
  if (require_both_groups) {
    const std::size_t nt = treated_count();
    if (nt == 0 || nt == n) throw DataError("dataset must contain both treated and control units");
  }
}

CausalDataset CausalDataset::subset(std::span<const std::size_t> idx) const {
  CausalDataset out;
  out.x = x.select_rows(idx);
  out.metadata = metadata;
  auto pick = [&](const std::vector<double>& v) {
    std::vector<double> r;
    r.reserve(idx.size());
    for (std::size_t i : idx) r.push_back(v.at(i));
    return r;
  };
  for (std::size_t i : idx) out.t.push_back(t.at(i));
  out.yf = pick(yf);
  if (ycf) out.ycf = pick(*ycf);
  if (mu0) out.mu0 = pick(*mu0);
  if (mu1) out.mu1 = pick(*mu1);
  return out;
}

void SyntheticSpec::validate() const {
  if (n < 20) throw ConfigError("n", "must be at least 20");
  if (d < 2) throw ConfigError("d", "must be at least 2");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma", "must be finite and >= 0");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma", "must be finite and >= 0");
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"n", n}, {"d", d}, {"gamma", gamma}, {"quadratic", quadratic}, {"sigma", sigma}, {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.n = j.at("n").get<std::size_t>();
  s.d = j.at("d").get<std::size_t>();
  s.gamma = j.at("gamma").get<double>();
  s.quadratic = j.at("quadratic").get<bool>();
  s.sigma = j.at("sigma").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

CausalDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const SeededRng root(spec.seed);
  const Surfaces f = draw_surfaces(spec, root.fork(1));

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const SeededRng base = root.fork(100 + static_cast<std::uint64_t>(attempt));
    SeededRng xr = base.fork(1), tr = base.fork(2), nf = base.fork(3), ncf = base.fork(4);

    CausalDataset ds;
    ds.x = xr.gaussian(spec.n, spec.d);
    ds.t.resize(spec.n);
    ds.yf.resize(spec.n);
    std::vector<double> ycf(spec.n), mu0(spec.n), mu1(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
      auto xi = ds.x.row(i);
      double lin0 = 0.0, lin_tau = 0.0, score = 0.0;
      for (std::size_t j = 0; j < spec.d; ++j) {
        lin0 += f.beta0[j] * xi[j];
        lin_tau += f.beta_tau[j] * xi[j];
        score += f.w[j] * xi[j];
      }
      double m0 = lin0, tau = 1.0 + lin_tau;
      if (spec.quadratic) {
        m0 += f.c0 * xi[f.p] * xi[f.q];
        tau += f.c_tau * (xi[f.r] * xi[f.r] - 1.0);
      }
      mu0[i] = m0;
      mu1[i] = m0 + tau;
      ds.t[i] = tr.bernoulli(sigmoid(spec.gamma * score)) ? 1 : 0;
      const double e_f = nf.normal(), e_cf = ncf.normal();
      const double m_f = ds.t[i] ? mu1[i] : mu0[i];
      const double m_cf = ds.t[i] ? mu0[i] : mu1[i];
      ds.yf[i] = m_f + spec.sigma * e_f;
      ycf[i] = m_cf + spec.sigma * e_cf;
    }
    const std::size_t nt = ds.treated_count();
    if (nt == 0 || nt == spec.n) continue;
    ds.ycf = std::move(ycf);
    ds.mu0 = std::move(mu0);
    ds.mu1 = std::move(mu1);
    ds.metadata = {{"generator", "synthetic"},
                   {"spec", spec.to_json()},
                   {"attempt", attempt},
                   {"rng", SeededRng::kAlgorithm},
                   {"propensity_direction", f.w}};
    return ds;
  }
  throw DataError("generate_synthetic: a treatment group stayed empty after " + std::to_string(kMaxAttempts) +
                  " attempts");
}

CausalDataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1, "");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_cells(line);

  std::map<std::string, std::size_t> pos;
  std::size_t d = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (!pos.emplace(h, c).second) throw ParseError("duplicate column", 1, h);
    if (h.size() > 1 && h[0] == 'x' && std::all_of(h.begin() + 1, h.end(), ::isdigit)) {
      ++d;
    } else if (h != "t" && h != "yf" && h != "ycf" && h != "mu0" && h != "mu1") {
      throw ParseError("unknown column", 1, h);
    }
  }
  for (std::size_t j = 0; j < d; ++j)
    if (!pos.count("x" + std::to_string(j))) throw ParseError("missing covariate column", 1, "x" + std::to_string(j));
  if (d == 0) throw ParseError("no covariate columns", 1, "x0");
  for (const char* must : {"t", "yf"})
    if (!pos.count(must)) throw ParseError("missing mandatory column", 1, must);
  if (pos.count("mu0") != pos.count("mu1"))
    throw ParseError("mu0 and mu1 must appear together", 1, pos.count("mu0") ? "mu1" : "mu0");

  std::vector<double> xs, yf, ycf, mu0, mu1;
  std::vector<int> t;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_cells(line);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()),
                       row, "");
    for (std::size_t j = 0; j < d; ++j) {
      const std::string name = "x" + std::to_string(j);
      xs.push_back(parse_number(cells[pos[name]], row, name));
    }
    const double tv = parse_number(cells[pos["t"]], row, "t");
    if (tv != 0.0 && tv != 1.0) throw ParseError("treatment must be 0 or 1", row, "t");
    t.push_back(static_cast<int>(tv));
    yf.push_back(parse_number(cells[pos["yf"]], row, "yf"));
    if (pos.count("ycf")) ycf.push_back(parse_number(cells[pos["ycf"]], row, "ycf"));
    if (pos.count("mu0")) {
      mu0.push_back(parse_number(cells[pos["mu0"]], row, "mu0"));
      mu1.push_back(parse_number(cells[pos["mu1"]], row, "mu1"));
    }
  }

  CausalDataset ds;
  const std::size_t n = t.size();
  if (n == 0) throw ParseError("no data rows", row, "");
  ds.x = Matrix(n, d, std::move(xs));
  ds.t = std::move(t);
  ds.yf = std::move(yf);
  if (pos.count("ycf")) ds.ycf = std::move(ycf);
  if (pos.count("mu0")) {
    ds.mu0 = std::move(mu0);
    ds.mu1 = std::move(mu1);
  }
  ds.metadata = {{"generator", "csv"}, {"rows", n}, {"columns", header}};
  return ds;
}

CausalDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CausalDataset ds = read_csv(in);
  ds.metadata["path"] = path;
  return ds;
}

void write_csv(const CausalDataset& ds, std::ostream& out) {
  ds.validate(false);
  const std::size_t d = ds.dim();
  for (std::size_t j = 0; j < d; ++j) out << 'x' << j << ',';
  out << "t,yf";
  if (ds.ycf) out << ",ycf";
  if (ds.mu0) out << ",mu0,mu1";
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out << ds.x(i, j) << ',';
    out << ds.t[i] << ',' << ds.yf[i];
    if (ds.ycf) out << ',' << (*ds.ycf)[i];
    if (ds.mu0) out << ',' << (*ds.mu0)[i] << ',' << (*ds.mu1)[i];
    out << '\n';
  }
}

void write_csv(const CausalDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_csv(ds, out);
}

void SplitSpec::validate() const {
  for (double r : {train, val, test})
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("split", "ratios must lie in (0, 1)");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split", "ratios must sum to 1");
}

SplitIndices split(const CausalDataset& ds, const SplitSpec& spec) {
  spec.validate();
  ds.validate();
  SeededRng rng(mix_seed(spec.seed, 0x5b11));
  SplitIndices out;

  auto carve = [&](std::vector<std::size_t> group) {
    rng.shuffle(std::span<std::size_t>(group));
    const std::size_t g = group.size();
    const std::size_t n_train = std::min(g, round_half_up(spec.train * static_cast<double>(g)));
    const std::size_t n_val = std::min(g - n_train, round_half_up(spec.val * static_cast<double>(g)));
    out.train.insert(out.train.end(), group.begin(), group.begin() + n_train);
    out.val.insert(out.val.end(), group.begin() + n_train, group.begin() + n_train + n_val);
    out.test.insert(out.test.end(), group.begin() + n_train + n_val, group.end());
  };

  if (spec.stratify) {
    std::vector<std::size_t> treated, control;
    for (std::size_t i = 0; i < ds.size(); ++i) (ds.t[i] ? treated : control).push_back(i);
    carve(std::move(treated));
    carve(std::move(control));
  } else {
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    carve(std::move(all));
  }
  for (auto* part : {&out.train, &out.val, &out.test}) {
    std::sort(part->begin(), part->end());
    std::size_t nt = 0;
    for (std::size_t i : *part) nt += ds.t[i];
    if (nt == 0 || nt == part->size())
      throw DataError("split: a partition lacks treated or control units; dataset too small");
  }
  return out;
}

Standardizer Standardizer::fit(const Matrix& x) {
  if (x.rows() == 0) throw DimensionError("Standardizer::fit on empty matrix");
  Standardizer s;
  const double n = static_cast<double>(x.rows());
  s.mean = col_sums(x);
  for (double& m : s.mean) m /= n;
  s.scale.assign(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) s.scale[j] += std::pow(x(i, j) - s.mean[j], 2);
  for (double& v : s.scale) {
    v = std::sqrt(v / n);
    if (v < 1e-12) v = 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) throw DimensionError("Standardizer::apply: width mismatch");
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = (out(i, j) - mean[j]) / scale[j];
  return out;
}

}  // namespace otcr
