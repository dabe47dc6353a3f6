#include "spdc/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <Eigen/Dense>

#include "spdc/constants.hpp"

namespace spdc::num {

namespace {

// Gauss-Kronrod 7-15 nodes on [0,1] side of the symmetric rule.
constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
// Embedded 7-point Gauss weights act on nodes 1,3,5,7 of the list above.
constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

struct PanelEstimate {
  cplx kronrod;
  double error;
};

PanelEstimate gk15(const std::function<cplx(double)>& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  cplx kronrod{0.0, 0.0};
  cplx gauss{0.0, 0.0};
  std::array<cplx, 15> values;
  for (int i = 0; i < 7; ++i) {
    const double dx = half * kKronrodNodes[static_cast<std::size_t>(i)];
    values[static_cast<std::size_t>(2 * i)] = f(mid - dx) + f(mid + dx);
  }
  values[14] = f(mid);
  for (int i = 0; i < 7; ++i)
    kronrod += kKronrodWeights[static_cast<std::size_t>(i)] * values[static_cast<std::size_t>(2 * i)];
  kronrod += kKronrodWeights[7] * values[14];
  gauss = kGaussWeights[0] * values[2] + kGaussWeights[1] * values[6] +
          kGaussWeights[2] * values[10] + kGaussWeights[3] * values[14];
  kronrod *= half;
  gauss *= half;
  const double diff = std::abs(kronrod - gauss);
  // QUADPACK-style sharpened estimate; exact value is irrelevant, only ordering.
  const double err = diff > 0.0 ? diff * std::min(1.0, std::pow(200.0 * diff, 1.5)) : 0.0;
  return {kronrod, std::max(err, diff * 1e-6)};
}

void integrate_recursive(const std::function<cplx(double)>& f, double a, double b,
                         double abs_tol, double rel_tol, int depth, int max_depth,
                         QuadratureResult& acc) {
  const PanelEstimate est = gk15(f, a, b);
  acc.evaluations += 15;
  const double tol = std::max(abs_tol, rel_tol * std::abs(est.kronrod));
  if (est.error <= tol || depth >= max_depth) {
    acc.value += est.kronrod;
    acc.error += est.error;
    return;
  }
  const double mid = 0.5 * (a + b);
  integrate_recursive(f, a, mid, abs_tol * 0.5, rel_tol, depth + 1, max_depth, acc);
  integrate_recursive(f, mid, b, abs_tol * 0.5, rel_tol, depth + 1, max_depth, acc);
}

}  // namespace

QuadratureResult integrate(const std::function<cplx(double)>& f, double a, double b,
                           double abs_tol, double rel_tol, int max_depth) {
  QuadratureResult acc;
  if (a == b) return acc;
  integrate_recursive(f, a, b, abs_tol, rel_tol, 0, max_depth, acc);
  return acc;
}

double integrate_real(const std::function<double(double)>& f, double a, double b,
                      double abs_tol, double rel_tol, int max_depth) {
  return integrate([&f](double x) { return cplx(f(x), 0.0); }, a, b, abs_tol, rel_tol, max_depth)
      .value.real();
}

// ------------------------------------------------------------ special values

namespace {

// Weideman rational approximation of w(z) on the upper half plane, series
// length N = 64.  Coefficients a_m (of Z^m) are cosine sums of the auxiliary
// function F(theta) = exp(-t^2)(L^2+t^2), t = L tan(theta/2); the one-time
// O(N^2) sum keeps startup deterministic without a baked table.
constexpr int kWeidemanN = 64;
constexpr double kWeidemanL = 6.727171322029716;  // sqrt(N / sqrt(2))

const std::array<double, kWeidemanN>& weideman_coefficients() {
  static const std::array<double, kWeidemanN> coeffs = [] {
    std::array<double, kWeidemanN> a{};
    const int M = 2 * kWeidemanN;  // theta half-grid count
    const double L = kWeidemanL;
    std::vector<double> F(static_cast<std::size_t>(M));
    F[0] = L * L;
    for (int k = 1; k < M; ++k) {
      const double t = L * std::tan(0.5 * kPi * k / M);
      F[static_cast<std::size_t>(k)] = std::exp(-t * t) * (L * L + t * t);
    }
    for (int n = 1; n <= kWeidemanN; ++n) {
      double sum = F[0];
      for (int k = 1; k < M; ++k)
        sum += 2.0 * F[static_cast<std::size_t>(k)] * std::cos(kPi * n * k / M);
      a[static_cast<std::size_t>(n - 1)] = sum / (4.0 * kWeidemanN);
    }
    return a;
  }();
  return coeffs;
}

}  // namespace

cplx faddeeva_w(cplx z) {
  if (z.imag() < 0.0) throw std::domain_error("faddeeva_w requires Im(z) >= 0");
  const double L = kWeidemanL;
  const auto& a = weideman_coefficients();
  const cplx iz(-z.imag(), z.real());
  const cplx Zden = cplx(L, 0.0) - iz;
  const cplx Z = (cplx(L, 0.0) + iz) / Zden;
  cplx p(0.0, 0.0);
  for (int n = kWeidemanN - 1; n >= 0; --n) p = p * Z + a[static_cast<std::size_t>(n)];
  const cplx inv_sqrt_pi(1.0 / std::sqrt(kPi), 0.0);
  return 2.0 * p / (Zden * Zden) + inv_sqrt_pi / Zden;
}

cplx erf_scaled(double x, double y) {
  if (y == 0.0) return cplx(std::erf(x), 0.0);
  const double sign = x < 0.0 ? -1.0 : 1.0;
  const double ax = std::abs(x);
  // erf(x+iy) = 1 - exp(-(x+iy)^2) w(i(x+iy)) for Re >= 0; fold the exp(-y^2)
  // scale into the prefactor so nothing overflows.
  const cplx zz(ax, y * sign);          // erf odd: erf(-u) = -erf(u)
  const cplx izz(-zz.imag(), zz.real());
  const cplx w = faddeeva_w(izz);
  // exp(-y^2) * exp(-(x+iy)^2) = exp(-x^2) * exp(-2ixy) with one extra exp(-2y^2)?
  // (x+iy)^2 = x^2 - y^2 + 2ixy, so exp(-y^2 - (x+iy)^2) = exp(-x^2) exp(-2ixy).
  const double phase = -2.0 * ax * (y * sign);
  const cplx rot(std::cos(phase), std::sin(phase));
  const cplx result = cplx(std::exp(-y * y), 0.0) - std::exp(-ax * ax) * rot * w;
  return sign * result;
}

cplx erf_cplx(cplx z) {
  const cplx scaled = erf_scaled(z.real(), z.imag());
  return scaled * std::exp(z.imag() * z.imag());
}

// ------------------------------------------------------------- optimization

namespace {
constexpr double kGoldenRatio = 0.6180339887498949;
}

ScalarOptimum golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                                 double xtol, int scan_points) {
  if (!(hi > lo)) throw std::invalid_argument("golden_section_min: empty bracket");
  if (scan_points < 3) scan_points = 3;
  int evals = 0;
  // Three-point bracketing: coarse scan, then require an interior minimum.
  std::vector<double> xs(static_cast<std::size_t>(scan_points));
  std::vector<double> ys(static_cast<std::size_t>(scan_points));
  for (int i = 0; i < scan_points; ++i) {
    xs[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (scan_points - 1);
    ys[static_cast<std::size_t>(i)] = f(xs[static_cast<std::size_t>(i)]);
    ++evals;
  }
  const auto it = std::min_element(ys.begin(), ys.end());
  const auto idx = static_cast<std::size_t>(std::distance(ys.begin(), it));
  if (idx == 0 || idx + 1 == ys.size())
    throw std::domain_error("golden_section_min: no interior minimum in bracket");
  double a = xs[idx - 1], b = xs[idx + 1];
  double x1 = b - kGoldenRatio * (b - a);
  double x2 = a + kGoldenRatio * (b - a);
  double f1 = f(x1), f2 = f(x2);
  evals += 2;
  while (b - a > xtol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGoldenRatio * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGoldenRatio * (b - a);
      f2 = f(x2);
    }
    ++evals;
  }
  const double x = f1 <= f2 ? x1 : x2;
  return {x, std::min(f1, f2), evals};
}

ScalarOptimum golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                 double xtol, int scan_points) {
  ScalarOptimum r = golden_section_min([&f](double x) { return -f(x); }, lo, hi, xtol, scan_points);
  r.value = -r.value;
  return r;
}

// ------------------------------------------------------------ least squares

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit: need n >= 2");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("linear_fit: degenerate abscissae");
  LinearFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    ss += r * r;
  }
  const double s2 = x.size() > 2 ? ss / (n - 2.0) : 0.0;
  fit.slope_se = std::sqrt(s2 * n / denom);
  fit.intercept_se = std::sqrt(s2 * sxx / denom);
  return fit;
}

QuadraticFit quadratic_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3)
    throw std::invalid_argument("quadratic_fit: need n >= 3");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(x.size()), 3);
  Eigen::VectorXd b(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    A(r, 0) = 1.0;
    A(r, 1) = x[i];
    A(r, 2) = x[i] * x[i];
    b(r) = y[i];
  }
  const Eigen::Vector3d c = (A.transpose() * A).ldlt().solve(A.transpose() * b);
  QuadraticFit fit{c(0), c(1), c(2), 0.0};
  const double mean = b.mean();
  const double ss_tot = (b.array() - mean).square().sum();
  const double ss_res = (b - A * c).squaredNorm();
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

LmResult levenberg_marquardt(
    const std::function<void(std::span<const double>, std::span<double>)>& residual,
    std::size_t n_residuals, std::vector<double> initial,
    std::span<const double> weights, const LmOptions& options) {
  const std::size_t n_params = initial.size();
  if (n_params == 0 || n_residuals < n_params)
    throw std::invalid_argument("levenberg_marquardt: underdetermined problem");
  if (!weights.empty() && weights.size() != n_residuals)
    throw std::invalid_argument("levenberg_marquardt: weight size mismatch");

  const auto eval_cost = [&](std::span<const double> p, Eigen::VectorXd& r) {
    std::vector<double> raw(n_residuals);
    residual(p, raw);
    r.resize(static_cast<Eigen::Index>(n_residuals));
    double cost = 0.0;
    for (std::size_t i = 0; i < n_residuals; ++i) {
      const double w = weights.empty() ? 1.0 : std::sqrt(std::max(weights[i], 0.0));
      r(static_cast<Eigen::Index>(i)) = w * raw[i];
      cost += r(static_cast<Eigen::Index>(i)) * r(static_cast<Eigen::Index>(i));
    }
    return cost;
  };

  LmResult result;
  result.params = std::move(initial);
  Eigen::VectorXd r;
  double cost = eval_cost(result.params, r);
  double lambda = options.initial_lambda;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    // Forward-difference Jacobian of the weighted residual.
    Eigen::MatrixXd J(static_cast<Eigen::Index>(n_residuals), static_cast<Eigen::Index>(n_params));
    for (std::size_t j = 0; j < n_params; ++j) {
      const double h = std::max(1e-8, 1e-7 * std::abs(result.params[j]));
      std::vector<double> bumped = result.params;
      bumped[j] += h;
      Eigen::VectorXd rb;
      eval_cost(bumped, rb);
      J.col(static_cast<Eigen::Index>(j)) = (rb - r) / h;
    }
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool stepped = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd M = JtJ;
      for (std::size_t j = 0; j < n_params; ++j) {
        const auto d = static_cast<Eigen::Index>(j);
        M(d, d) += lambda * std::max(JtJ(d, d), 1e-12);
      }
      const Eigen::VectorXd step = M.ldlt().solve(-g);
      std::vector<double> candidate = result.params;
      for (std::size_t j = 0; j < n_params; ++j) candidate[j] += step(static_cast<Eigen::Index>(j));
      Eigen::VectorXd rc;
      const double c2 = eval_cost(candidate, rc);
      if (c2 < cost) {
        const double rel_step = step.norm() / std::max(1e-30, Eigen::Map<Eigen::VectorXd>(
                                                                  result.params.data(),
                                                                  static_cast<Eigen::Index>(n_params))
                                                                  .norm());
        const double rel_drop = (cost - c2) / std::max(cost, 1e-300);
        result.params = std::move(candidate);
        r = std::move(rc);
        cost = c2;
        lambda = std::max(lambda * 0.3, 1e-14);
        stepped = true;
        if (rel_drop < options.ftol || rel_step < options.xtol) {
          result.converged = true;
          result.cost = cost;
          return result;
        }
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e14) break;
    }
    if (!stepped) {
      result.converged = true;  // stuck in a flat basin: accept current point
      break;
    }
  }
  result.cost = cost;
  return result;
}

// ------------------------------------------------------------------- robust

double mad_sigma(std::span<const double> residuals) {
  if (residuals.empty()) throw std::invalid_argument("mad_sigma: empty input");
  std::vector<double> tmp(residuals.begin(), residuals.end());
  const auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
  std::nth_element(tmp.begin(), mid, tmp.end());
  const double median = *mid;
  for (double& v : tmp) v = std::abs(v - median);
  std::nth_element(tmp.begin(), mid, tmp.end());
  return *mid / 0.6744897501960817;
}

double tukey_bisquare(double r, double s, double c) {
  if (s <= 0.0) return 1.0;
  const double u = r / (c * s);
  if (std::abs(u) >= 1.0) return 0.0;
  const double t = 1.0 - u * u;
  return t * t;
}

MeanSd mean_sd(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_sd: empty input");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(ss / (static_cast<double>(values.size()) - 1.0)) : 0.0;
  return {mean, sd};
}

// ------------------------------------------------------------ deterministic

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& text) {
  return fnv1a64(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
  // SplitMix64 chain expands the seed into four nonzero state words.
  std::uint64_t z = seed;
  for (auto& s : s_) {
    z += 0x9e3779b97f4a7c15ULL;
    std::uint64_t w = z;
    w = (w ^ (w >> 30)) * 0xbf58476d1ce4e5b9ULL;
    w = (w ^ (w >> 27)) * 0x94d049bb133111ebULL;
    s = w ^ (w >> 31);
  }
}

namespace {
inline std::uint64_t rotl64(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl64(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl64(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::pair<double, double> Rng::normal_pair() {
  // Box-Muller; 1 - uniform() keeps the logarithm argument in (0, 1].
  const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
  const double theta = 2.0 * kPi * uniform();
  return {r * std::cos(theta), r * std::sin(theta)};
}

// ----------------------------------------------------------------- parallel

void parallel_for(std::size_t n, unsigned budget, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (budget <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned workers = std::min<unsigned>(budget, static_cast<unsigned>(n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace spdc::num
