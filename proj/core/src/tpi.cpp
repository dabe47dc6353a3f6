#include "spdc/tpi.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>

#include "spdc/numerics.hpp"

namespace spdc::tpi {

SplitterCounts SplitterCounts::reference() { return {1386700.0, 1593534.0, 1333374.0, 1577124.0}; }

SplitterEstimate splitting_ratio(const SplitterCounts& counts) {
  for (double c : {counts.c11, counts.c12, counts.c21, counts.c22})
    if (!(c > 0.0)) throw std::invalid_argument("tpi: splitter counts must all be positive");
  SplitterEstimate est;
  est.counts = counts;
  est.f = counts.c11 * counts.c22 / (counts.c12 * counts.c21);
  const double root = std::sqrt(est.f);
  est.tau = 1.0 / (1.0 + root);
  est.rho = root / (1.0 + root);
  // Var(ln F) is the sum of the four Poisson relative variances; tau depends
  // on F only through sqrt(F) / (1 + sqrt F)^2.
  const double var_ln_f =
      1.0 / counts.c11 + 1.0 / counts.c12 + 1.0 / counts.c21 + 1.0 / counts.c22;
  est.tau_err = root * std::sqrt(var_ln_f) / (2.0 * (1.0 + root) * (1.0 + root));
  return est;
}

double splitter_limited_visibility(double tau, double rho) {
  if (std::abs(tau + rho - 1.0) > 1e-9)
    throw std::invalid_argument("tpi: transmittance and reflectance must sum to one");
  if (!(tau > 0.0) || !(rho > 0.0))
    throw std::invalid_argument("tpi: splitting ratio must be strictly between 0 and 1");
  return 2.0 * tau * rho / (tau * tau + rho * rho);
}

double fringe_visibility(double i1, double i2, double tau, double rho) {
  if (!(i1 > 0.0) || !(i2 > 0.0))
    throw std::invalid_argument("tpi: fringe intensities must be positive");
  if (!(tau > 0.0) || !(rho > 0.0))
    throw std::invalid_argument("tpi: splitting ratio must be strictly between 0 and 1");
  return 2.0 * std::sqrt(tau * rho * i1 * i2) / (tau * i1 + rho * i2);
}

FringeStats fringe_mc(double i_avg_uw, double sigma_eps_uw, double tau, double rho, int trials,
                      std::uint64_t seed) {
  if (!(i_avg_uw > 0.0)) throw std::invalid_argument("tpi: average power must be positive");
  if (sigma_eps_uw < 0.0) throw std::invalid_argument("tpi: power spread must be non-negative");
  if (trials < 2) throw std::invalid_argument("tpi: need at least 2 fringe trials");
  num::Rng rng(seed);
  std::vector<double> vis(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    const double eps = sigma_eps_uw * rng.normal_pair().first;
    // mismatch can never exceed the power itself
    const double mag = std::min(std::abs(eps), 0.999 * i_avg_uw);
    vis[static_cast<std::size_t>(t)] =
        fringe_visibility(i_avg_uw + mag, i_avg_uw - mag, tau, rho);
  }
  const auto stats = num::mean_sd(vis);
  return {stats.mean, stats.sd, trials};
}

double reference_fringe_power_uw() { return 6.60; }

double pair_number_pmf(double p, int n) {
  if (!(p >= 0.0) || p >= 1.0)
    throw std::invalid_argument("tpi: pair probability must lie in [0, 1)");
  if (n < 0) throw std::invalid_argument("tpi: pair number must be non-negative");
  return (1.0 - p) * std::pow(p, n);
}

double pair_number_tail(double p, int n_max) {
  if (!(p >= 0.0) || p >= 1.0)
    throw std::invalid_argument("tpi: pair probability must lie in [0, 1)");
  if (n_max < 0) throw std::invalid_argument("tpi: pair number must be non-negative");
  return std::pow(p, n_max + 1);
}

void SourceModel::validate() const {
  if (!(pair_probability >= 0.0) || pair_probability >= 1.0)
    throw std::invalid_argument("tpi: pair probability must lie in [0, 1)");
  for (double e : {herald_efficiency, interference_efficiency})
    if (!(e >= 0.0) || e > 1.0)
      throw std::invalid_argument("tpi: efficiencies must lie in [0, 1]");
  if (efficiency_err < 0.0 || p_per_mw < 0.0)
    throw std::invalid_argument("tpi: uncertainties and power mapping must be non-negative");
}

SourceModel SourceModel::reference() {
  SourceModel s;
  s.herald_efficiency = 0.5;
  s.interference_efficiency = 0.55;
  s.efficiency_err = 0.03;
  s.p_per_mw = 2.32e-4;
  s.pair_probability = s.p_per_mw * 5.8;
  return s;
}

void LossyNetwork::validate() const {
  const auto n = unitary.rows();
  if (n < 1 || unitary.cols() != n) throw std::invalid_argument("tpi: network must be square");
  if (core_modes < 1 || core_modes > n)
    throw std::invalid_argument("tpi: core larger than the network");
  const double residual =
      (unitary.adjoint() * unitary - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
  if (residual > 1e-10) throw std::invalid_argument("tpi: network is not unitary");
}

Eigen::MatrixXcd four_mode_core(double tau) {
  if (!(tau > 0.0) || !(tau < 1.0))
    throw std::invalid_argument("tpi: transmittance must lie strictly between 0 and 1");
  const double rho = 1.0 - tau;
  Eigen::MatrixXcd core = Eigen::MatrixXcd::Identity(4, 4);
  core(1, 1) = std::sqrt(rho);
  core(1, 2) = std::sqrt(tau);
  core(2, 1) = std::sqrt(tau);
  core(2, 2) = -std::sqrt(rho);
  return core;
}

namespace {

// rotation coupling `mode` to `aux` with transmittance eta
void apply_loss(Eigen::MatrixXcd& u, int mode, int aux, double eta) {
  const int n = static_cast<int>(u.rows());
  Eigen::MatrixXcd splitter = Eigen::MatrixXcd::Identity(n, n);
  splitter(mode, mode) = std::sqrt(eta);
  splitter(mode, aux) = -std::sqrt(1.0 - eta);
  splitter(aux, mode) = std::sqrt(1.0 - eta);
  splitter(aux, aux) = std::sqrt(eta);
  u = splitter * u;
}

template <typename Scalar, typename Matrix>
Scalar ryser(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  if (n == 0) return Scalar(1);
  std::vector<Scalar> sums(static_cast<std::size_t>(n), Scalar(0));
  Scalar total(0);
  std::uint32_t prev = 0;
  for (std::uint32_t k = 1; k < (1u << n); ++k) {
    const std::uint32_t gray = k ^ (k >> 1);
    const std::uint32_t diff = gray ^ prev;
    const int j = std::countr_zero(diff);
    if (gray & diff)
      for (int i = 0; i < n; ++i) sums[static_cast<std::size_t>(i)] += a(i, j);
    else
      for (int i = 0; i < n; ++i) sums[static_cast<std::size_t>(i)] -= a(i, j);
    Scalar prod(1);
    for (int i = 0; i < n; ++i) prod *= sums[static_cast<std::size_t>(i)];
    total += ((n - std::popcount(gray)) & 1) ? -prod : prod;
    prev = gray;
  }
  return total;
}

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

int occupation_total(std::span<const int> occ) {
  int total = 0;
  for (int n : occ) {
    if (n < 0) throw std::invalid_argument("tpi: occupations must be non-negative");
    total += n;
  }
  return total;
}

std::vector<int> occupation_slots(std::span<const int> occ) {
  std::vector<int> slots;
  for (std::size_t m = 0; m < occ.size(); ++m)
    for (int k = 0; k < occ[m]; ++k) slots.push_back(static_cast<int>(m));
  return slots;
}

// all output occupations over `modes` totaling `extra` on top of one photon
// in every detector mode
void for_each_coincidence_pattern(int modes, std::span<const int> detectors, int extra,
                                  const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> occ(static_cast<std::size_t>(modes), 0);
  for (int m : detectors) occ[static_cast<std::size_t>(m)] = 1;
  std::function<void(int, int)> place = [&](int mode, int left) {
    if (mode == modes - 1) {
      occ[static_cast<std::size_t>(mode)] += left;
      visit(occ);
      occ[static_cast<std::size_t>(mode)] -= left;
      return;
    }
    for (int k = 0; k <= left; ++k) {
      occ[static_cast<std::size_t>(mode)] += k;
      place(mode + 1, left - k);
      occ[static_cast<std::size_t>(mode)] -= k;
    }
  };
  place(0, extra);
}

}  // namespace

LossyNetwork embed_losses(const Eigen::MatrixXcd& core, const std::array<double, 2>& herald_eff,
                          const std::array<double, 2>& input_eff,
                          const std::array<double, 2>& output_eff) {
  if (core.rows() != 4 || core.cols() != 4)
    throw std::invalid_argument("tpi: core must be a four-mode unitary");
  if ((core.adjoint() * core - Eigen::MatrixXcd::Identity(4, 4)).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("tpi: core is not unitary");
  for (double e : {herald_eff[0], herald_eff[1], input_eff[0], input_eff[1], output_eff[0],
                   output_eff[1]})
    if (!(e >= 0.0) || e > 1.0)
      throw std::invalid_argument("tpi: efficiencies must lie in [0, 1]");

  // modes 0-3: herald 1, splitter in 1, splitter in 2, herald 2
  // modes 4-9: auxiliaries for herald 1, herald 2, input 1, input 2,
  //            output 1, output 2
  LossyNetwork net;
  net.core_modes = 4;
  Eigen::MatrixXcd stage_in = Eigen::MatrixXcd::Identity(10, 10);
  apply_loss(stage_in, 0, 4, herald_eff[0]);
  apply_loss(stage_in, 3, 5, herald_eff[1]);
  apply_loss(stage_in, 1, 6, input_eff[0]);
  apply_loss(stage_in, 2, 7, input_eff[1]);

  Eigen::MatrixXcd wide_core = Eigen::MatrixXcd::Identity(10, 10);
  wide_core.topLeftCorner(4, 4) = core;

  Eigen::MatrixXcd stage_out = Eigen::MatrixXcd::Identity(10, 10);
  apply_loss(stage_out, 1, 8, output_eff[0]);
  apply_loss(stage_out, 2, 9, output_eff[1]);

  net.unitary = stage_out * wide_core * stage_in;
  net.validate();
  return net;
}

std::complex<double> permanent(const Eigen::MatrixXcd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("tpi: permanent needs a square matrix");
  if (m.rows() > 20) throw std::invalid_argument("tpi: permanent too large");
  return ryser<std::complex<double>>(m);
}

double permanent(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("tpi: permanent needs a square matrix");
  if (m.rows() > 20) throw std::invalid_argument("tpi: permanent too large");
  return ryser<double>(m);
}

double transition_probability(const LossyNetwork& net, std::span<const int> in,
                              std::span<const int> out, Photons mode) {
  net.validate();
  const auto modes = static_cast<std::size_t>(net.modes());
  if (in.size() != modes || out.size() != modes)
    throw std::invalid_argument("tpi: occupation length must match the mode count");
  const int n = occupation_total(in);
  if (n > 8) throw std::invalid_argument("tpi: at most 8 photons are supported");
  if (occupation_total(out) != n) return 0.0;
  if (n == 0) return 1.0;

  const auto cols = occupation_slots(in);
  const auto rows = occupation_slots(out);
  double occ_factor = 1.0;
  for (int s : out) occ_factor *= factorial(s);

  if (mode == Photons::Indistinguishable) {
    Eigen::MatrixXcd sub(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        sub(r, c) = net.unitary(rows[static_cast<std::size_t>(r)],
                                cols[static_cast<std::size_t>(c)]);
    double in_factor = 1.0;
    for (int t : in) in_factor *= factorial(t);
    return std::norm(ryser<std::complex<double>>(sub)) / (occ_factor * in_factor);
  }
  Eigen::MatrixXd sub(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      sub(r, c) = std::norm(net.unitary(rows[static_cast<std::size_t>(r)],
                                        cols[static_cast<std::size_t>(c)]));
  return ryser<double>(sub) / occ_factor;
}

double coincidence_probability(const LossyNetwork& net, std::span<const int> in, Photons mode,
                               std::span<const int> detector_modes) {
  net.validate();
  const int modes = net.modes();
  if (in.size() != static_cast<std::size_t>(modes))
    throw std::invalid_argument("tpi: occupation length must match the mode count");
  std::vector<int> seen(static_cast<std::size_t>(modes), 0);
  for (int d : detector_modes) {
    if (d < 0 || d >= modes) throw std::invalid_argument("tpi: detector mode out of range");
    if (seen[static_cast<std::size_t>(d)]++)
      throw std::invalid_argument("tpi: duplicate detector mode");
  }
  const int n = occupation_total(in);
  if (n > 8) throw std::invalid_argument("tpi: at most 8 photons are supported");
  const int floor = static_cast<int>(detector_modes.size());
  if (n < floor) return 0.0;

  double total = 0.0;
  for_each_coincidence_pattern(modes, detector_modes, n - floor,
                               [&](const std::vector<int>& out) {
                                 total += transition_probability(net, in, out, mode);
                               });
  return total;
}

double coincidence_probability(const LossyNetwork& net, std::span<const int> in, Photons mode) {
  std::vector<int> core(static_cast<std::size_t>(net.core_modes));
  std::iota(core.begin(), core.end(), 0);
  return coincidence_probability(net, in, mode, core);
}

namespace {

struct NetworkEval {
  double p_d = 0.0;
  double p_i = 0.0;
  double truncation = 0.0;

  double visibility() const {
    if (!(p_d > 0.0))
      throw std::domain_error("tpi: no distinguishable coincidences, visibility undefined");
    return (p_d - p_i) / p_d;
  }
};

NetworkEval evaluate_multipair(double p1, double p2, double tau,
                               const std::array<double, 2>& herald,
                               const std::array<double, 2>& input, int max_photons) {
  const auto net = embed_losses(four_mode_core(tau), herald, input, {1.0, 1.0});
  NetworkEval eval;
  double covered = 0.0;
  const int max_pairs = max_photons / 2;
  std::vector<int> occ(10, 0);
  for (int n1 = 0; n1 <= max_pairs; ++n1)
    for (int n2 = 0; n1 + n2 <= max_pairs; ++n2) {
      const double weight = pair_number_pmf(p1, n1) * pair_number_pmf(p2, n2);
      covered += weight;
      if (n1 == 0 || n2 == 0) continue;  // a silent herald vetoes the four-fold
      occ[0] = n1;
      occ[1] = n1;
      occ[2] = n2;
      occ[3] = n2;
      eval.p_d += weight * coincidence_probability(net, occ, Photons::Distinguishable);
      eval.p_i += weight * coincidence_probability(net, occ, Photons::Indistinguishable);
    }
  eval.truncation = 1.0 - covered;
  return eval;
}

}  // namespace

MultipairResult multipair_visibility(const SourceModel& source1, const SourceModel& source2,
                                     const SplitterEstimate& splitter, int max_photons,
                                     int trials, std::uint64_t seed, unsigned threads) {
  source1.validate();
  source2.validate();
  if (max_photons < 4 || max_photons > 8)
    throw std::invalid_argument("tpi: photon budget must lie in [4, 8]");
  if (trials < 0) throw std::invalid_argument("tpi: negative trial count");
  if (!(splitter.tau > 0.0) || !(splitter.tau < 1.0))
    throw std::invalid_argument("tpi: transmittance must lie strictly between 0 and 1");

  MultipairResult result;
  result.trials = trials;
  const auto nominal = evaluate_multipair(
      source1.pair_probability, source2.pair_probability, splitter.tau,
      {source1.herald_efficiency, source2.herald_efficiency},
      {source1.interference_efficiency, source2.interference_efficiency}, max_photons);
  result.visibility = nominal.visibility();
  result.p_coincidence_distinguishable = nominal.p_d;
  result.p_coincidence_indistinguishable = nominal.p_i;
  result.truncation = nominal.truncation;
  if (trials == 0) {
    result.mean = result.visibility;
    return result;
  }

  // Trials re-draw the splitter counts and the efficiencies.  Counts are in
  // the millions, where the Poisson law is its own Gaussian limit.
  constexpr int kShards = 64;
  std::vector<double> vis(static_cast<std::size_t>(trials));
  std::vector<std::size_t> start(kShards + 1, 0);
  for (int s = 0; s < kShards; ++s)
    start[static_cast<std::size_t>(s) + 1] =
        start[static_cast<std::size_t>(s)] +
        static_cast<std::size_t>(trials / kShards + (s < trials % kShards ? 1 : 0));
  num::parallel_for(kShards, threads, [&](std::size_t shard) {
    num::Rng rng(num::substream_seed(seed, shard));
    const auto redraw_count = [&](double c) {
      return std::max(1.0, c + std::sqrt(c) * rng.normal_pair().first);
    };
    const auto redraw_eff = [&](double e, double err) {
      return std::clamp(e + err * rng.normal_pair().first, 1e-6, 1.0);
    };
    for (std::size_t t = start[shard]; t < start[shard + 1]; ++t) {
      SplitterCounts drawn;
      drawn.c11 = redraw_count(splitter.counts.c11);
      drawn.c12 = redraw_count(splitter.counts.c12);
      drawn.c21 = redraw_count(splitter.counts.c21);
      drawn.c22 = redraw_count(splitter.counts.c22);
      const double tau = splitting_ratio(drawn).tau;
      const auto eval = evaluate_multipair(
          source1.pair_probability, source2.pair_probability, tau,
          {redraw_eff(source1.herald_efficiency, source1.efficiency_err),
           redraw_eff(source2.herald_efficiency, source2.efficiency_err)},
          {redraw_eff(source1.interference_efficiency, source1.efficiency_err),
           redraw_eff(source2.interference_efficiency, source2.efficiency_err)},
          max_photons);
      vis[t] = eval.visibility();
    }
  });
  const auto stats = num::mean_sd(vis);
  result.mean = stats.mean;
  result.sd = stats.sd;
  return result;
}

PowerScan visibility_vs_power(std::span<const double> powers_mw, const SourceModel& source1,
                              const SourceModel& source2, const SplitterEstimate& splitter,
                              int max_photons, int trials, std::uint64_t seed,
                              unsigned threads) {
  if (powers_mw.size() < 2)
    throw std::invalid_argument("tpi: need at least two pump powers for a scan");
  PowerScan scan;
  for (std::size_t k = 0; k < powers_mw.size(); ++k) {
    const double power = powers_mw[k];
    if (!(power > 0.0)) throw std::invalid_argument("tpi: pump powers must be positive");
    SourceModel s1 = source1;
    SourceModel s2 = source2;
    s1.pair_probability = s1.p_per_mw * power;
    s2.pair_probability = s2.p_per_mw * power;
    const auto point = multipair_visibility(s1, s2, splitter, max_photons, trials,
                                            num::substream_seed(seed, k), threads);
    scan.power_mw.push_back(power);
    scan.visibility.push_back(point.visibility);
    scan.sd.push_back(point.sd);
  }
  // least squares line through the nominal visibilities
  const auto n = static_cast<double>(scan.power_mw.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < scan.power_mw.size(); ++k) {
    sx += scan.power_mw[k];
    sy += scan.visibility[k];
    sxx += scan.power_mw[k] * scan.power_mw[k];
    sxy += scan.power_mw[k] * scan.visibility[k];
  }
  scan.slope_per_mw = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  scan.intercept = (sy - scan.slope_per_mw * sx) / n;
  return scan;
}

double visibility_budget(std::span<const double> factors) {
  if (factors.empty()) throw std::invalid_argument("tpi: empty visibility budget");
  double product = 1.0;
  for (double f : factors) {
    if (!(f > 0.0) || f > 1.0)
      throw std::invalid_argument("tpi: budget factors must lie in (0, 1]");
    product *= f;
  }
  return product;
}

void DipDataset::validate() const {
  if (delay.size() != coincidences.size())
    throw std::invalid_argument("tpi: one coincidence count per delay required");
  if (!singles.empty() && singles.size() != delay.size())
    throw std::invalid_argument("tpi: one singles count per delay required");
  if (delay.size() < 6) throw std::invalid_argument("tpi: need at least 6 dip points");
  for (std::size_t k = 1; k < delay.size(); ++k)
    if (!(delay[k] > delay[k - 1]))
      throw std::invalid_argument("tpi: delays must be strictly increasing");
  for (double c : coincidences)
    if (!(c >= 0.0)) throw std::invalid_argument("tpi: counts must be non-negative");
}

namespace {

struct DipModel {
  bool linear = false;

  // parameters: baseline, visibility, center, width[, slope]
  int size() const { return linear ? 5 : 4; }

  double value(const Eigen::VectorXd& p, double t) const {
    const double drift = linear ? 1.0 + p(4) * t : 1.0;
    const double z = (t - p(2)) / p(3);
    return p(0) * drift * (1.0 - p(1) * std::exp(-0.5 * z * z));
  }

  void gradient(const Eigen::VectorXd& p, double t, Eigen::VectorXd& g) const {
    const double drift = linear ? 1.0 + p(4) * t : 1.0;
    const double z = (t - p(2)) / p(3);
    const double gauss = std::exp(-0.5 * z * z);
    const double dip = 1.0 - p(1) * gauss;
    g(0) = drift * dip;
    g(1) = -p(0) * drift * gauss;
    g(2) = -p(0) * drift * p(1) * gauss * z / p(3);
    g(3) = -p(0) * drift * p(1) * gauss * z * z / p(3);
    if (linear) g(4) = p(0) * t * dip;
  }
};

// Levenberg-Marquardt with fixed per-point weights; returns convergence.
bool levenberg_marquardt(const DipModel& model, const std::vector<double>& t,
                         const std::vector<double>& y, const std::vector<double>& w,
                         Eigen::VectorXd& p) {
  const int dim = model.size();
  const auto n = t.size();
  const auto cost_of = [&](const Eigen::VectorXd& q) {
    double c = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double r = model.value(q, t[k]) - y[k];
      c += w[k] * r * r;
    }
    return c;
  };
  double lambda = 1e-3;
  double cost = cost_of(p);
  Eigen::VectorXd grad(dim);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    for (std::size_t k = 0; k < n; ++k) {
      model.gradient(p, t[k], grad);
      const double r = model.value(p, t[k]) - y[k];
      h.noalias() += w[k] * grad * grad.transpose();
      b.noalias() -= w[k] * r * grad;
    }
    Eigen::MatrixXd damped = h;
    for (int d = 0; d < dim; ++d)
      damped(d, d) += lambda * std::max(h(d, d), 1e-12);
    const Eigen::VectorXd step = damped.ldlt().solve(b);
    if (!step.allFinite()) return false;
    const Eigen::VectorXd trial = p + step;
    if (!(trial(3) > 0.0)) {
      lambda *= 4.0;
      continue;
    }
    const double trial_cost = cost_of(trial);
    if (trial_cost <= cost) {
      const double rel = step.cwiseAbs().maxCoeff() /
                         std::max(1.0, p.cwiseAbs().maxCoeff());
      p = trial;
      cost = trial_cost;
      lambda = std::max(lambda * 0.3, 1e-12);
      if (rel < 1e-12) return true;
    } else {
      lambda *= 4.0;
      if (lambda > 1e12) return false;
    }
  }
  return true;
}

// one robust (or plain) fit from a given start
bool fit_once(const DipModel& model, const std::vector<double>& t, const std::vector<double>& y,
              bool robust, Eigen::VectorXd& p) {
  std::vector<double> w(t.size(), 1.0);
  bool ok = levenberg_marquardt(model, t, y, w, p);
  if (!robust) return ok;
  for (int round = 0; round < 12; ++round) {
    std::vector<double> residual(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) residual[k] = model.value(p, t[k]) - y[k];
    std::vector<double> mag(residual.size());
    for (std::size_t k = 0; k < residual.size(); ++k) mag[k] = std::abs(residual[k]);
    std::nth_element(mag.begin(), mag.begin() + static_cast<long>(mag.size() / 2), mag.end());
    const double scale = 1.4826 * mag[mag.size() / 2];
    if (!(scale > 0.0)) return ok;
    double shift = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double u = residual[k] / (4.685 * scale);
      const double next = std::abs(u) < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0;
      shift = std::max(shift, std::abs(next - w[k]));
      w[k] = next;
    }
    const Eigen::VectorXd before = p;
    ok = levenberg_marquardt(model, t, y, w, p);
    if (shift < 1e-9 && (p - before).cwiseAbs().maxCoeff() <
                            1e-10 * std::max(1.0, before.cwiseAbs().maxCoeff()))
      break;
  }
  return ok;
}

}  // namespace

DipFit fit_dip(const DipDataset& data, bool linear_term, bool robust, int bootstrap,
               std::uint64_t seed) {
  data.validate();
  if (bootstrap < 0) throw std::invalid_argument("tpi: negative bootstrap count");

  const auto& t = data.delay;
  const auto& y = data.coincidences;
  std::vector<double> sorted = y;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double plateau = (sorted[0] + sorted[1] + sorted[2] + sorted[3]) / 4.0;
  const double y_min = sorted.back();
  if (!(plateau > y_min))
    throw std::domain_error("tpi: no plateau above the dip, cannot anchor the baseline");

  DipModel model{linear_term};
  Eigen::VectorXd p(model.size());
  p(0) = plateau;
  p(1) = std::clamp(1.0 - y_min / plateau, 0.01, 0.999);
  p(2) = t[static_cast<std::size_t>(
      std::min_element(y.begin(), y.end()) - y.begin())];
  p(3) = (t.back() - t.front()) / 10.0;
  if (linear_term) p(4) = 0.0;

  DipFit fit;
  fit.robust = robust;
  fit.converged = fit_once(model, t, y, robust, p);
  fit.baseline = p(0);
  fit.visibility = p(1);
  fit.center = p(2);
  fit.width = std::abs(p(3));
  fit.slope = linear_term ? p(4) : 0.0;
  fit.plateau_visibility = (plateau - y_min) / plateau;

  if (bootstrap > 0) {
    std::vector<double> vis, center, width;
    vis.reserve(static_cast<std::size_t>(bootstrap));
    for (int b = 0; b < bootstrap; ++b) {
      std::mt19937_64 eng(num::substream_seed(seed, static_cast<std::uint64_t>(b)));
      std::vector<double> resampled(y.size());
      for (std::size_t k = 0; k < y.size(); ++k) {
        const double mean = std::max(model.value(p, t[k]), 0.0);
        if (mean > 0.0) {
          std::poisson_distribution<long long> poisson(mean);
          resampled[k] = static_cast<double>(poisson(eng));
        } else {
          resampled[k] = 0.0;
        }
      }
      Eigen::VectorXd q = p;
      if (!fit_once(model, t, resampled, robust, q)) continue;
      vis.push_back(q(1));
      center.push_back(q(2));
      width.push_back(std::abs(q(3)));
    }
    if (vis.size() > 1) {
      fit.visibility_err = num::mean_sd(vis).sd;
      fit.center_err = num::mean_sd(center).sd;
      fit.width_err = num::mean_sd(width).sd;
    }
  }
  return fit;
}

}  // namespace spdc::tpi
