#include "spdc/tofs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>

#include "spdc/numerics.hpp"

namespace spdc::tofs {

namespace {

// Fixed shard count: the event stream decomposition never depends on the
// thread budget, so histograms are reproducible bit for bit.
constexpr int kShards = 64;

std::uint64_t shard_quota(std::uint64_t total, int shard) {
  return total / kShards + (static_cast<std::uint64_t>(shard) < total % kShards ? 1 : 0);
}

}  // namespace

void DispersionUnit::validate() const {
  if (dispersion_ps_per_nm == 0.0)
    throw std::invalid_argument("tofs: chromatic dispersion must be nonzero");
  if (!(reference_nm > 0.0))
    throw std::invalid_argument("tofs: reference wavelength must be positive");
}

double wavelength_to_delay(double delta_lambda_nm, const DispersionUnit& unit) {
  unit.validate();
  return unit.dispersion_ps_per_nm * delta_lambda_nm;
}

double bin_resolution_nm(const DispersionUnit& unit, double bin_ps) {
  unit.validate();
  if (!(bin_ps > 0.0)) throw std::invalid_argument("tofs: bin width must be positive");
  return bin_ps / std::abs(unit.dispersion_ps_per_nm);
}

double absolute_delay_ps(double lambda_nm, const DispersionUnit& unit) {
  return unit.insertion_ps + wavelength_to_delay(lambda_nm - unit.reference_nm, unit);
}

void JitterModel::validate() const {
  for (double c : contributions_ps)
    if (!(c >= 0.0)) throw std::invalid_argument("tofs: jitter contributions must be non-negative");
}

JitterModel JitterModel::reference_stack() {
  // Detector channel, two tagger channels, pump photodiode trigger.
  return JitterModel{{25.0, 15.0, 15.0, 18.0}};
}

double combined_jitter_ps(const JitterModel& model) {
  model.validate();
  double sum = 0.0;
  for (double c : model.contributions_ps) sum += c * c;
  return std::sqrt(sum);
}

void DelayHistogram::validate() const {
  if (counts.rows() < 1 || counts.cols() < 1)
    throw std::invalid_argument("tofs: histogram needs at least one bin");
  if (!(bin_ps > 0.0)) throw std::invalid_argument("tofs: bin width must be positive");
  if (features < 1) throw std::invalid_argument("tofs: at least one feature is required");
  if (features > 1 && !(period_ns > 0.0))
    throw std::invalid_argument("tofs: repeated features need a positive period");
}

void TofsSetup::validate() const {
  signal.validate();
  idler.validate();
  jitter.validate();
  if (!(bin_ps > 0.0)) throw std::invalid_argument("tofs: bin width must be positive");
  if (bins < 8) throw std::invalid_argument("tofs: need at least 8 bins per axis");
  if (features < 1) throw std::invalid_argument("tofs: at least one feature is required");
  if (!(period_ns > 0.0)) throw std::invalid_argument("tofs: repetition period must be positive");
}

namespace {

// Shared event machinery for one-shot simulation and incremental purity
// curves.  Each shard owns a generator; advancing to a larger cumulative
// budget draws exactly the per-shard quota difference, so a snapshot at any
// checkpoint matches a fresh one-shot run of the same total.
struct Engine {
  int bins = 0;
  double bin = 0.0, period_ps = 0.0;
  int features = 1;
  double off_s = 0.0, off_i = 0.0, sigma = 0.0;
  double period_ns = 0.0;
  std::vector<double> cum;
  double total = 0.0;
  int cols = 0;
  std::vector<double> delay_s, delay_i;
  std::vector<num::Rng> rng;
  std::vector<std::uint64_t> done;
  std::unique_ptr<std::atomic<std::uint64_t>[]> acc;

  Engine(const jsa::FrequencyGrid& grid, const Eigen::MatrixXd& jsi, const TofsSetup& setup,
         std::uint64_t seed) {
    grid.validate();
    setup.validate();
    const auto n_s = static_cast<Eigen::Index>(grid.signal_nm.size());
    const auto n_i = static_cast<Eigen::Index>(grid.idler_nm.size());
    if (jsi.rows() != n_s || jsi.cols() != n_i)
      throw std::invalid_argument("tofs: jsi dimensions do not match the grid");
    if (jsi.minCoeff() < 0.0) throw std::invalid_argument("tofs: jsi must be non-negative");
    if (std::abs(jsi.sum() - 1.0) > 1e-6)
      throw std::invalid_argument("tofs: jsi must be normalized to unit sum");

    bins = setup.bins;
    bin = setup.bin_ps;
    period_ns = setup.period_ns;
    period_ps = setup.period_ns * 1e3;
    features = setup.features;
    sigma = combined_jitter_ps(setup.jitter);

    cols = static_cast<int>(n_i);
    cum.resize(static_cast<std::size_t>(n_s * n_i));
    double running = 0.0;
    for (Eigen::Index i = 0; i < n_s; ++i)
      for (Eigen::Index j = 0; j < n_i; ++j) {
        running += jsi(i, j);
        cum[static_cast<std::size_t>(i * n_i + j)] = running;
      }
    total = running;

    delay_s.resize(grid.signal_nm.size());
    delay_i.resize(grid.idler_nm.size());
    for (std::size_t i = 0; i < delay_s.size(); ++i)
      delay_s[i] = absolute_delay_ps(grid.signal_nm[i], setup.signal);
    for (std::size_t j = 0; j < delay_i.size(); ++j)
      delay_i[j] = absolute_delay_ps(grid.idler_nm[j], setup.idler);

    // Anchor the low edge so the first feature keeps its full half-period
    // crop window; only the event data of every feature must fit above it.
    // When features * period exceed the capacity the top windows clip, the
    // recorded-but-discarded corner features of the reference acquisition.
    const double pad = 6.0 * sigma + bin;
    const double capacity = bins * bin;
    for (int axis = 0; axis < 2; ++axis) {
      const auto& d = axis == 0 ? delay_s : delay_i;
      const double insertion = (axis == 0 ? setup.signal : setup.idler).insertion_ps;
      const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
      const double bottom = std::min(*lo - pad, insertion - 0.5 * period_ps - bin);
      const double top = *hi + (features - 1) * period_ps + pad;
      const double required = top - bottom + bin;
      if (required > capacity) {
        std::ostringstream msg;
        msg << "tofs: histogram capacity " << capacity << " ps cannot hold " << features
            << " feature(s); the " << (axis == 0 ? "signal" : "idler") << " axis needs "
            << required << " ps";
        throw std::invalid_argument(msg.str());
      }
      (axis == 0 ? off_s : off_i) = std::floor(bottom / bin) * bin;
    }

    rng.reserve(kShards);
    for (int s = 0; s < kShards; ++s) rng.emplace_back(num::substream_seed(seed, s));
    done.assign(kShards, 0);
    acc.reset(new std::atomic<std::uint64_t>[static_cast<std::size_t>(bins) * bins]);
    for (std::size_t k = 0; k < static_cast<std::size_t>(bins) * bins; ++k)
      acc[k].store(0, std::memory_order_relaxed);
  }

  void draw(int shard, std::uint64_t n) {
    num::Rng& g = rng[static_cast<std::size_t>(shard)];
    for (std::uint64_t e = 0; e < n; ++e) {
      const double u = g.uniform() * total;
      auto cell = static_cast<std::size_t>(
          std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
      if (cell >= cum.size()) cell = cum.size() - 1;
      const auto i = cell / static_cast<std::size_t>(cols);
      const auto j = cell % static_cast<std::size_t>(cols);
      const int k = std::min(features - 1, static_cast<int>(g.uniform() * features));
      const auto [z1, z2] = g.normal_pair();
      const double ds = delay_s[i] + k * period_ps + sigma * z1;
      const double di = delay_i[j] + k * period_ps + sigma * z2;
      const auto bs = std::clamp<long>(static_cast<long>(std::floor((ds - off_s) / bin)), 0,
                                       bins - 1);
      const auto bi = std::clamp<long>(static_cast<long>(std::floor((di - off_i) / bin)), 0,
                                       bins - 1);
      acc[static_cast<std::size_t>(bs) * bins + static_cast<std::size_t>(bi)].fetch_add(
          1, std::memory_order_relaxed);
    }
  }

  void advance_to(std::uint64_t total_events, unsigned threads) {
    num::parallel_for(kShards, threads, [&](std::size_t s) {
      const auto shard = static_cast<int>(s);
      const std::uint64_t quota = shard_quota(total_events, shard);
      if (quota > done[s]) {
        draw(shard, quota - done[s]);
        done[s] = quota;
      }
    });
  }

  DelayHistogram snapshot() const {
    DelayHistogram h;
    h.counts.resize(bins, bins);
    for (int r = 0; r < bins; ++r)
      for (int c = 0; c < bins; ++c)
        h.counts(r, c) =
            acc[static_cast<std::size_t>(r) * bins + static_cast<std::size_t>(c)].load(
                std::memory_order_relaxed);
    h.bin_ps = bin;
    h.signal_offset_ps = off_s;
    h.idler_offset_ps = off_i;
    h.period_ns = period_ns;
    h.features = features;
    return h;
  }
};

}  // namespace

DelayHistogram simulate_histogram(const jsa::FrequencyGrid& grid, const Eigen::MatrixXd& jsi,
                                  const TofsSetup& setup, std::uint64_t events,
                                  std::uint64_t seed, unsigned threads) {
  if (events == 0) throw std::invalid_argument("tofs: event budget must be positive");
  Engine engine(grid, jsi, setup, seed);
  engine.advance_to(events, threads);
  return engine.snapshot();
}

ReconstructedJsi reconstruct_jsi(const DelayHistogram& hist, const DispersionUnit& signal,
                                 const DispersionUnit& idler, int feature) {
  hist.validate();
  signal.validate();
  idler.validate();
  if (feature < 0 || feature >= hist.features)
    throw std::invalid_argument("tofs: feature index out of range");

  const double period_ps = hist.period_ns * 1e3;
  const long half = static_cast<long>(std::floor(0.5 * period_ps / hist.bin_ps));
  if (half < 1) throw std::invalid_argument("tofs: repetition period shorter than one bin");
  const long window = 2 * half + 1;

  struct Axis {
    long lo = 0;
    std::vector<double> nm;
    bool flipped = false;
  };
  const auto crop_axis = [&](const DispersionUnit& unit, double offset_ps, long bins,
                             const char* name) {
    const double center = unit.insertion_ps + feature * period_ps;
    const long cb = static_cast<long>(std::floor((center - offset_ps) / hist.bin_ps));
    Axis axis;
    axis.lo = cb - half;
    if (axis.lo < 0 || cb + half >= bins) {
      std::ostringstream msg;
      msg << "tofs: feature " << feature << " is clipped by the " << name
          << " boundary of the delay map; discard it";
      throw std::invalid_argument(msg.str());
    }
    axis.nm.resize(static_cast<std::size_t>(window));
    for (long b = 0; b < window; ++b) {
      const double t = offset_ps + (static_cast<double>(axis.lo + b) + 0.5) * hist.bin_ps;
      axis.nm[static_cast<std::size_t>(b)] =
          unit.reference_nm +
          (t - unit.insertion_ps - feature * period_ps) / unit.dispersion_ps_per_nm;
    }
    axis.flipped = unit.dispersion_ps_per_nm < 0.0;
    if (axis.flipped) std::reverse(axis.nm.begin(), axis.nm.end());
    return axis;
  };
  const Axis row = crop_axis(signal, hist.signal_offset_ps, hist.counts.rows(), "signal");
  const Axis col = crop_axis(idler, hist.idler_offset_ps, hist.counts.cols(), "idler");

  ReconstructedJsi rec;
  rec.counts.resize(window, window);
  for (long i = 0; i < window; ++i)
    for (long j = 0; j < window; ++j) {
      const long br = row.lo + (row.flipped ? window - 1 - i : i);
      const long bc = col.lo + (col.flipped ? window - 1 - j : j);
      rec.counts(i, j) = static_cast<double>(hist.counts(br, bc));
    }
  const double sum = rec.counts.sum();
  if (!(sum > 0.0)) throw std::domain_error("tofs: selected feature holds no counts");
  rec.intensity = rec.counts / sum;
  rec.mean_counts_per_bin = sum / static_cast<double>(window * window);

  rec.grid.signal_nm = row.nm;
  rec.grid.idler_nm = col.nm;
  rec.grid.pump_center_nm = 1.0 / (1.0 / signal.reference_nm + 1.0 / idler.reference_nm);
  rec.grid.validate();
  return rec;
}

double reconstruction_purity(const ReconstructedJsi& rec) {
  return jsa::purity(jsa::sqrt_jsi(rec.grid, rec.intensity));
}

namespace {

// E[sqrt(K)] for K ~ Poisson(mu).  Series below mu = 100, asymptotic series
// above; the two branches agree to 1e-9 at the crossover.
double sqrt_moment(double mu) {
  if (mu <= 0.0) return 0.0;
  if (mu > 100.0) {
    const double inv = 1.0 / mu;
    return std::sqrt(mu) *
           (1.0 - 0.125 * inv - 0.0546875 * inv * inv - 0.0732421875 * inv * inv * inv);
  }
  const int kmax = static_cast<int>(mu + 12.0 * std::sqrt(mu) + 25.0);
  double p = std::exp(-mu);
  double sum = 0.0;
  for (int k = 1; k <= kmax; ++k) {
    p *= mu / k;
    sum += std::sqrt(static_cast<double>(k)) * p;
  }
  return sum;
}

Eigen::MatrixXd bin_weights(const jsa::FrequencyGrid& grid) {
  const auto ws = grid.signal_measure();
  const auto wi = grid.idler_measure();
  Eigen::MatrixXd omega(static_cast<Eigen::Index>(ws.size()), static_cast<Eigen::Index>(wi.size()));
  for (Eigen::Index i = 0; i < omega.rows(); ++i)
    for (Eigen::Index j = 0; j < omega.cols(); ++j)
      omega(i, j) = ws[static_cast<std::size_t>(i)] * wi[static_cast<std::size_t>(j)];
  return omega;
}

// Purity of sqrt(field) under the grid measure; normalisation cancels, so this
// equals jsa::purity(jsa::sqrt_jsi(grid, field)).
double field_purity(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& mu) {
  const Eigen::MatrixXd a = (omega.array() * mu.array()).sqrt();
  const Eigen::MatrixXd g = a.transpose() * a;
  const double d = g.trace();
  return g.squaredNorm() / (d * d);
}

// E[purity(sqrt(Poisson(mu)))] in closed form.  Numerator and squared
// denominator are polynomials in the per-cell sqrt-counts, so their
// expectations assemble from independent per-cell moments; replacing the
// expected ratio by the ratio of expectations costs under 1e-6 for fields
// holding 100+ counts per bin.
double expected_noisy_purity(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& mu) {
  Eigen::MatrixXd s(mu.rows(), mu.cols());
  Eigen::MatrixXd r(mu.rows(), mu.cols());
  for (Eigen::Index i = 0; i < mu.rows(); ++i)
    for (Eigen::Index j = 0; j < mu.cols(); ++j) {
      const double m = sqrt_moment(mu(i, j));
      s(i, j) = std::sqrt(omega(i, j)) * m;
      r(i, j) = omega(i, j) * m * m;
    }
  const Eigen::MatrixXd q = omega.array() * mu.array();
  const Eigen::MatrixXd varw = omega.array().square() * mu.array();
  const Eigen::MatrixXd c = s.transpose() * s;
  const Eigen::MatrixXd rr = r.transpose() * r;
  const Eigen::MatrixXd qq = q.transpose() * q;
  const Eigen::VectorXd qcol = q.colwise().sum();
  double en = c.squaredNorm() - c.diagonal().squaredNorm();
  en += qq.sum() - qq.diagonal().sum();
  en -= rr.sum() - rr.diagonal().sum();
  en += qcol.squaredNorm();
  en += varw.sum();
  const double ed = q.sum();
  return en / (ed * ed + varw.sum());
}

Eigen::MatrixXd box_mean(const Eigen::MatrixXd& k) {
  Eigen::MatrixXd out(k.rows(), k.cols());
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      double sum = 0.0;
      int n = 0;
      for (Eigen::Index a = std::max<Eigen::Index>(0, i - 1);
           a <= std::min<Eigen::Index>(k.rows() - 1, i + 1); ++a)
        for (Eigen::Index b = std::max<Eigen::Index>(0, j - 1);
             b <= std::min<Eigen::Index>(k.cols() - 1, j + 1); ++b) {
          sum += k(a, b);
          ++n;
        }
      out(i, j) = sum / n;
    }
  return out;
}

// Cells above ~40 counts stand on their own; sparse cells take the in-bounds
// 3x3 mean, which restores sub-count structure a single draw cannot resolve.
Eigen::MatrixXd evidence_blend(const Eigen::MatrixXd& k) {
  const Eigen::MatrixXd sm = box_mean(k);
  Eigen::MatrixXd mu(k.rows(), k.cols());
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      const double w = std::clamp((sm(i, j) - 20.0) / 20.0, 0.0, 1.0);
      mu(i, j) = w * k(i, j) + (1.0 - w) * sm(i, j);
    }
  return mu;
}

}  // namespace

CorrectedPurity poisson_corrected_purity(const jsa::FrequencyGrid& grid,
                                         const Eigen::MatrixXd& counts, int resamples,
                                         std::uint64_t seed) {
  grid.validate();
  if (resamples < 30)
    throw std::invalid_argument("tofs: need at least 30 resamples for a stable correction");
  if (counts.rows() != static_cast<Eigen::Index>(grid.signal_nm.size()) ||
      counts.cols() != static_cast<Eigen::Index>(grid.idler_nm.size()))
    throw std::invalid_argument("tofs: counts dimensions do not match the grid");
  for (Eigen::Index i = 0; i < counts.rows(); ++i)
    for (Eigen::Index j = 0; j < counts.cols(); ++j) {
      const double v = counts(i, j);
      if (!(v >= 0.0) || std::floor(v) != v)
        throw std::invalid_argument("tofs: correction expects raw non-negative integer counts");
    }
  if (!(counts.sum() > 0.0)) throw std::domain_error("tofs: counts are all zero");

  CorrectedPurity out;
  out.resamples = resamples;
  out.raw = jsa::purity(jsa::sqrt_jsi(grid, counts));

  // Shot noise depresses the measured purity: E[sqrt K] < sqrt(mu) drains the
  // Gram cross terms, and most of the loss hides in cells whose mean sits
  // below one count.  The deficit is therefore computed in closed form for a
  // proxy mean field rather than resampled.  A single draw concentrates
  // sub-count mass and understates the deficit; a local mean spreads that
  // mass and overstates it at half the magnitude.  One part raw counts to
  // three parts blended field cancels the two support errors.
  const Eigen::MatrixXd omega = bin_weights(grid);
  const auto deficit = [&omega](const Eigen::MatrixXd& field) {
    return field_purity(omega, field) - expected_noisy_purity(omega, field);
  };
  out.bias = 0.25 * deficit(counts) + 0.75 * deficit(evidence_blend(counts));
  out.corrected = out.raw + out.bias;

  // Uncertainty is the spread of purities over re-noised copies of the
  // measurement, one independent Poisson layer each.
  std::vector<double> resampled(static_cast<std::size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    std::mt19937_64 eng(num::substream_seed(seed, static_cast<std::uint64_t>(r)));
    Eigen::MatrixXd draw(counts.rows(), counts.cols());
    for (Eigen::Index i = 0; i < counts.rows(); ++i)
      for (Eigen::Index j = 0; j < counts.cols(); ++j) {
        const double mean = counts(i, j);
        if (mean > 0.0) {
          std::poisson_distribution<long long> poisson(mean);
          draw(i, j) = static_cast<double>(poisson(eng));
        } else {
          draw(i, j) = 0.0;
        }
      }
    resampled[static_cast<std::size_t>(r)] = jsa::purity(jsa::sqrt_jsi(grid, draw));
  }
  out.std_error = num::mean_sd(resampled).sd;
  return out;
}

PurityCurve purity_vs_counts(const jsa::FrequencyGrid& grid, const Eigen::MatrixXd& jsi,
                             const TofsSetup& setup, std::span<const std::uint64_t> checkpoints,
                             int feature, int resamples, std::uint64_t seed, unsigned threads) {
  if (checkpoints.empty()) throw std::invalid_argument("tofs: no checkpoints given");
  for (std::size_t m = 0; m < checkpoints.size(); ++m) {
    if (checkpoints[m] == 0 || (m > 0 && checkpoints[m] <= checkpoints[m - 1]))
      throw std::invalid_argument("tofs: checkpoints must be strictly increasing and positive");
  }
  if (feature < 0 || feature >= setup.features)
    throw std::invalid_argument("tofs: feature index out of range");

  Engine engine(grid, jsi, setup, seed);
  PurityCurve curve;
  curve.feature = feature;
  for (std::size_t m = 0; m < checkpoints.size(); ++m) {
    engine.advance_to(checkpoints[m], threads);
    const auto rec = reconstruct_jsi(engine.snapshot(), setup.signal, setup.idler, feature);
    const auto corrected = poisson_corrected_purity(
        rec.grid, rec.counts, resamples, num::substream_seed(seed, 0x10000u + m));
    curve.events.push_back(checkpoints[m]);
    curve.mean_counts_per_bin.push_back(rec.mean_counts_per_bin);
    curve.raw_purity.push_back(corrected.raw);
    curve.corrected_purity.push_back(corrected.corrected);
    curve.corrected_se.push_back(corrected.std_error);
  }
  return curve;
}

}  // namespace spdc::tofs
