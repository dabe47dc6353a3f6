#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

// Shared numeric building blocks: adaptive quadrature, the Faddeeva function
// and scaled complex error function, golden-section minimization, small
// least-squares helpers, a dense Levenberg-Marquardt driver and deterministic
// seeding utilities.
namespace spdc::num {

using cplx = std::complex<double>;

// ---------------------------------------------------------------- quadrature

struct QuadratureResult {
  cplx value{0.0, 0.0};
  double error = 0.0;      // accumulated error estimate
  int evaluations = 0;
};

// Adaptive Gauss-Kronrod 7-15 on [a, b].  Bisects until the local Kronrod
// error estimate satisfies abs_tol/rel_tol or max_depth is reached.
QuadratureResult integrate(const std::function<cplx(double)>& f, double a, double b,
                           double abs_tol = 1e-12, double rel_tol = 1e-10, int max_depth = 30);

double integrate_real(const std::function<double(double)>& f, double a, double b,
                      double abs_tol = 1e-12, double rel_tol = 1e-10, int max_depth = 30);

// ------------------------------------------------------------ special values

// Faddeeva function w(z) = exp(-z^2) erfc(-iz) for Im(z) >= 0.
cplx faddeeva_w(cplx z);

// Scaled complex error function exp(-y^2) * erf(x + iy).  Stable for large
// |y| where erf itself overflows; this is the combination that appears in the
// windowed Fourier transform of a Gaussian.
cplx erf_scaled(double x, double y);

// Plain complex erf; accurate only while exp(y^2) stays representable.
cplx erf_cplx(cplx z);

// ------------------------------------------------------------- optimization

struct ScalarOptimum {
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

// Golden-section minimum of f on [lo, hi] to within xtol.  The bracket is
// first tightened by a three-point scan so that an interior minimum exists;
// throws std::domain_error if the scan sees a boundary minimum.
ScalarOptimum golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                                 double xtol, int scan_points = 8);

// Same contract, maximizing.
ScalarOptimum golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                 double xtol, int scan_points = 8);

// ------------------------------------------------------------ least squares

struct LinearFit {
  double slope = 0.0, intercept = 0.0;
  double slope_se = 0.0, intercept_se = 0.0;
};
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

// Coefficients of y ~= c0 + c1 x + c2 x^2.
struct QuadraticFit {
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  double r_squared = 0.0;
};
QuadraticFit quadratic_fit(std::span<const double> x, std::span<const double> y);

// Dense Levenberg-Marquardt with forward-difference Jacobian.
// residual(params, out) fills out with one entry per data point; the driver
// minimizes sum w_i r_i^2 for optional fixed weights w_i.
struct LmOptions {
  int max_iterations = 200;
  double ftol = 1e-12;     // relative decrease of the cost
  double xtol = 1e-12;     // relative parameter step
  double initial_lambda = 1e-3;
};
struct LmResult {
  std::vector<double> params;
  double cost = 0.0;       // sum of weighted squared residuals
  int iterations = 0;
  bool converged = false;
};
LmResult levenberg_marquardt(
    const std::function<void(std::span<const double>, std::span<double>)>& residual,
    std::size_t n_residuals, std::vector<double> initial,
    std::span<const double> weights = {}, const LmOptions& options = {});

// ------------------------------------------------------------------- robust

// Median absolute deviation scaled to estimate sigma for normal residuals.
double mad_sigma(std::span<const double> residuals);

// Tukey bisquare weight for residual r at scale s (tuning constant c).
double tukey_bisquare(double r, double s, double c = 4.685);

// --------------------------------------------------------------- statistics

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n-1)
};
MeanSd mean_sd(std::span<const double> values);

// ------------------------------------------------------------ deterministic

// FNV-1a 64-bit hash; used for config/layout fingerprints in reports.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(const std::string& text);

// SplitMix64 scrambling; derives independent substream seeds from a master
// seed so results do not depend on thread count or evaluation order.
std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream);

// xoshiro256++ with SplitMix64 seeding.  A fixed, portable stream: shard
// decomposition, not standard-library internals, decides every draw.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next_u64();
  double uniform();  // [0, 1), 53-bit resolution
  std::pair<double, double> normal_pair();

 private:
  std::uint64_t s_[4];
};

// ----------------------------------------------------------------- parallel

// Runs fn(i) for i in [0, n) on up to `budget` threads (1 = serial).  Results
// must be written to disjoint slots by index to stay deterministic.
void parallel_for(std::size_t n, unsigned budget, const std::function<void(std::size_t)>& fn);

}  // namespace spdc::num
