#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spdc/poling.hpp"
#include "spdc/tofs.hpp"
#include "spdc/tpi.hpp"

// File formats and run plumbing for the command line tool: CSV tables and
// matrices, JSON reports and sidecars, and the run configuration with its
// content hash.  Every emitted file carries the hash of the effective
// configuration so artifacts from different runs can never be confused.
namespace forge {

using json = nlohmann::json;

// ---------------------------------------------------------------- tables ---

struct Table {
  std::vector<std::string> names;            // one per column
  std::vector<std::vector<double>> columns;  // equal lengths

  void validate() const;  // throws std::invalid_argument
};

// Comment lines ("# key=value") carry the config hash and free-form
// metadata; the first regular line is the column header.
void write_table_csv(const std::string& path, const Table& table, std::uint64_t config_hash);
Table read_table_csv(const std::string& path);

// Matrix with wavelength axes: first data row holds the column axis, the
// leading cell of every later row holds the row axis value.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& values,
                      const std::vector<double>& row_axis_nm,
                      const std::vector<double>& col_axis_nm, std::uint64_t config_hash);

struct MatrixCsv {
  Eigen::MatrixXd values;
  std::vector<double> row_axis_nm;
  std::vector<double> col_axis_nm;
};
MatrixCsv read_matrix_csv(const std::string& path);

// Domain layouts: columns (index, width_um, sign); generator metadata rides
// in the comment header so a round trip restores the full object.
void write_layout_csv(const std::string& path, const spdc::poling::DomainLayout& layout,
                      std::uint64_t config_hash);
spdc::poling::DomainLayout read_layout_csv(const std::string& path);

// Delay scans: columns (delay, coincidences[, singles]); acquisition time
// per point rides in the comment header.
void write_dip_csv(const std::string& path, const spdc::tpi::DipDataset& data,
                   std::uint64_t config_hash);
spdc::tpi::DipDataset read_dip_csv(const std::string& path);

// Delay histograms: integer count matrix plus a JSON metadata sidecar with
// the acquisition geometry needed to reconstruct.
void write_histogram(const std::string& csv_path, const std::string& meta_path,
                     const spdc::tofs::DelayHistogram& hist, const spdc::tofs::DispersionUnit& signal,
                     const spdc::tofs::DispersionUnit& idler, std::uint64_t events,
                     std::uint64_t seed, std::uint64_t config_hash);

struct HistogramFile {
  spdc::tofs::DelayHistogram histogram;
  spdc::tofs::DispersionUnit signal;
  spdc::tofs::DispersionUnit idler;
  std::uint64_t events = 0;
  std::uint64_t seed = 0;
};
HistogramFile read_histogram(const std::string& csv_path, const std::string& meta_path);

// "histogram.csv" -> "histogram_meta.json"
std::string derive_meta_path(const std::string& csv_path);

// ---------------------------------------------------------------- config ---

// Effective run configuration.  Loaded from a single JSON document; command
// line flags override individual fields afterwards, and the content hash is
// taken over the effective values.
struct RunConfig {
  std::string material_path;  // empty selects the bundled dataset
  double crystal_length_mm = 30.0;
  double sigma_ratio = 1.0 / 6.04;  // nonlinearity rms width over length
  std::string layout_generator = "coherence";  // coherence | sub-fixed | sub-variable
  double min_domain_width_um = 2.0;

  std::size_t grid_points = 512;
  double grid_half_width_nm = 4.0;

  std::string pump_shape = "gaussian";  // gaussian | sech
  double pump_width_nm = 0.308;         // intensity-rms width
  double pump_gdd_ps2 = 0.0;
  double collection_xi = 0.0;  // 0 = plane-wave collection

  std::vector<double> tofs_jitter_ps;   // empty selects the reference stack
  double tofs_dispersion_ps_per_nm = -1350.0;
  double tofs_bin_ps = 80.0;
  int tofs_bins = 800;
  int tofs_features = 5;
  double tofs_period_ns = 1e3 / 76.0;

  double fringe_power_uw = 0.0;  // 0 selects the calibrated reference power
  double fringe_spread_uw = 0.3;

  std::uint64_t seed = 20260823;
  std::string out_dir = "out";
  unsigned threads = 1;
  bool fast = false;

  static RunConfig load(const std::string& path);           // throws ConfigError
  static RunConfig from_json_text(const std::string& text); // throws ConfigError
  json to_json() const;
  std::string canonical_text() const;  // sorted keys, fixed formatting
  std::uint64_t hash() const;          // FNV-1a of the canonical text
  std::string hash_hex() const;
};

// Configuration problems carry their own type so the driver can map them to
// the config exit class.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --------------------------------------------------------------- reports ---

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
};

struct Report {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_clock_s = 0.0;
  json results = json::object();
  std::vector<Check> checks;
  std::vector<std::string> notes;

  void add_check(const std::string& name, double value, double expected, double tolerance);
  void add_check(const std::string& name, bool passed, double value);
  bool all_passed() const;
  json to_json() const;
};

void write_report(const std::string& path, const Report& report);

// value +- error pair as a JSON object, the uncertainty idiom of all reports
json quantity(double value, double error);
json quantity(double value, double error, const std::string& unit);

}  // namespace forge
