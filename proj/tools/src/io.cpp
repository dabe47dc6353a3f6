#include "forge/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <limits>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "spdc/numerics.hpp"

namespace forge {

namespace {

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

std::ofstream open_out(const std::string& path) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("io: cannot write " + path);
  out << std::setprecision(17);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("io: cannot read " + path);
  return in;
}

std::string hash_hex(std::uint64_t hash) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << hash;
  return s.str();
}

// comment lines accumulate key=value metadata; regular lines pass through
struct CsvReader {
  std::ifstream in;
  std::vector<std::pair<std::string, std::string>> meta;

  explicit CsvReader(const std::string& path) : in(open_in(path)) {}

  bool next(std::string& line) {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line.front() == '#') {
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
          auto key = line.substr(1, eq - 1);
          key.erase(0, key.find_first_not_of(' '));
          key.erase(key.find_last_not_of(' ') + 1);
          meta.emplace_back(key, line.substr(eq + 1));
        }
        continue;
      }
      return true;
    }
    return false;
  }

  std::string meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    return {};
  }
};

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, const std::string& context) {
  try {
    std::size_t used = 0;
    const double value = std::stod(cell, &used);
    while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
    if (used != cell.size()) throw std::invalid_argument(cell);
    return value;
  } catch (const std::exception&) {
    throw std::runtime_error("io: malformed number '" + cell + "' in " + context);
  }
}

}  // namespace

void Table::validate() const {
  if (names.size() != columns.size())
    throw std::invalid_argument("io: table needs one name per column");
  if (columns.empty()) throw std::invalid_argument("io: table has no columns");
  for (const auto& column : columns)
    if (column.size() != columns.front().size())
      throw std::invalid_argument("io: table columns must have equal length");
}

void write_table_csv(const std::string& path, const Table& table, std::uint64_t config_hash) {
  table.validate();
  auto out = open_out(path);
  out << "# config_hash=" << hash_hex(config_hash) << "\n";
  for (std::size_t c = 0; c < table.names.size(); ++c)
    out << table.names[c] << (c + 1 < table.names.size() ? ',' : '\n');
  for (std::size_t r = 0; r < table.columns.front().size(); ++r)
    for (std::size_t c = 0; c < table.columns.size(); ++c)
      out << table.columns[c][r] << (c + 1 < table.columns.size() ? ',' : '\n');
}

Table read_table_csv(const std::string& path) {
  CsvReader reader(path);
  std::string line;
  if (!reader.next(line)) throw std::runtime_error("io: " + path + " has no header");
  Table table;
  for (auto& cell : split_cells(line)) table.names.push_back(cell);
  table.columns.resize(table.names.size());
  while (reader.next(line)) {
    const auto cells = split_cells(line);
    if (cells.size() != table.names.size())
      throw std::runtime_error("io: ragged row in " + path);
    for (std::size_t c = 0; c < cells.size(); ++c)
      table.columns[c].push_back(parse_number(cells[c], path));
  }
  table.validate();
  return table;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& values,
                      const std::vector<double>& row_axis_nm,
                      const std::vector<double>& col_axis_nm, std::uint64_t config_hash) {
  if (values.rows() != static_cast<Eigen::Index>(row_axis_nm.size()) ||
      values.cols() != static_cast<Eigen::Index>(col_axis_nm.size()))
    throw std::invalid_argument("io: matrix axes do not match its shape");
  auto out = open_out(path);
  out << "# config_hash=" << hash_hex(config_hash) << "\n";
  out << "# first row: column axis (nm); first cell of later rows: row axis (nm)\n";
  for (double idler : col_axis_nm) out << ',' << idler;
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out << row_axis_nm[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << values(r, c);
    out << '\n';
  }
}

MatrixCsv read_matrix_csv(const std::string& path) {
  CsvReader reader(path);
  std::string line;
  if (!reader.next(line)) throw std::runtime_error("io: " + path + " has no axis row");
  MatrixCsv result;
  const auto header = split_cells(line);
  if (header.size() < 2 || !header.front().empty())
    throw std::runtime_error("io: " + path + " is not an axis-labeled matrix");
  for (std::size_t c = 1; c < header.size(); ++c)
    result.col_axis_nm.push_back(parse_number(header[c], path));
  std::vector<std::vector<double>> rows;
  while (reader.next(line)) {
    const auto cells = split_cells(line);
    if (cells.size() != header.size()) throw std::runtime_error("io: ragged row in " + path);
    result.row_axis_nm.push_back(parse_number(cells.front(), path));
    rows.emplace_back();
    for (std::size_t c = 1; c < cells.size(); ++c)
      rows.back().push_back(parse_number(cells[c], path));
  }
  result.values.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(result.col_axis_nm.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      result.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return result;
}

void write_layout_csv(const std::string& path, const spdc::poling::DomainLayout& layout,
                      std::uint64_t config_hash) {
  layout.validate();
  auto out = open_out(path);
  out << "# config_hash=" << hash_hex(config_hash) << "\n";
  out << "# generator=" << layout.generator << "\n";
  out << "# start_mm=" << layout.start_mm << "\n";
  out << "# min_width_um=" << layout.min_width_um << "\n";
  out << "index,width_um,sign\n";
  for (std::size_t d = 0; d < layout.domains.size(); ++d)
    out << d << ',' << layout.domains[d].width_um << ',' << layout.domains[d].sign << '\n';
}

spdc::poling::DomainLayout read_layout_csv(const std::string& path) {
  CsvReader reader(path);
  std::string line;
  if (!reader.next(line)) throw std::runtime_error("io: " + path + " has no header");
  const auto header = split_cells(line);
  if (header.size() != 3 || header[0] != "index" || header[1] != "width_um" ||
      header[2] != "sign")
    throw std::runtime_error("io: " + path + " is not a domain layout");
  spdc::poling::DomainLayout layout;
  while (reader.next(line)) {
    const auto cells = split_cells(line);
    if (cells.size() != 3) throw std::runtime_error("io: ragged row in " + path);
    spdc::poling::Domain domain;
    domain.width_um = parse_number(cells[1], path);
    domain.sign = parse_number(cells[2], path) < 0.0 ? -1 : +1;
    layout.domains.push_back(domain);
  }
  layout.generator = reader.meta_value("generator");
  if (const auto start = reader.meta_value("start_mm"); !start.empty())
    layout.start_mm = parse_number(start, path);
  if (const auto width = reader.meta_value("min_width_um"); !width.empty())
    layout.min_width_um = parse_number(width, path);
  layout.validate();
  return layout;
}

void write_dip_csv(const std::string& path, const spdc::tpi::DipDataset& data,
                   std::uint64_t config_hash) {
  data.validate();
  auto out = open_out(path);
  out << "# config_hash=" << hash_hex(config_hash) << "\n";
  out << "# seconds_per_point=" << data.seconds_per_point << "\n";
  out << (data.singles.empty() ? "delay,coincidences\n" : "delay,coincidences,singles\n");
  for (std::size_t k = 0; k < data.delay.size(); ++k) {
    out << data.delay[k] << ',' << data.coincidences[k];
    if (!data.singles.empty()) out << ',' << data.singles[k];
    out << '\n';
  }
}

spdc::tpi::DipDataset read_dip_csv(const std::string& path) {
  CsvReader reader(path);
  std::string line;
  if (!reader.next(line)) throw std::runtime_error("io: " + path + " has no header");
  const auto header = split_cells(line);
  if (header.size() < 2 || header.size() > 3 || header[0] != "delay")
    throw std::runtime_error("io: " + path + " is not a delay scan");
  spdc::tpi::DipDataset data;
  while (reader.next(line)) {
    const auto cells = split_cells(line);
    if (cells.size() != header.size()) throw std::runtime_error("io: ragged row in " + path);
    data.delay.push_back(parse_number(cells[0], path));
    data.coincidences.push_back(parse_number(cells[1], path));
    if (cells.size() == 3) data.singles.push_back(parse_number(cells[2], path));
  }
  if (const auto seconds = reader.meta_value("seconds_per_point"); !seconds.empty())
    data.seconds_per_point = parse_number(seconds, path);
  data.validate();
  return data;
}

void write_histogram(const std::string& csv_path, const std::string& meta_path,
                     const spdc::tofs::DelayHistogram& hist,
                     const spdc::tofs::DispersionUnit& signal,
                     const spdc::tofs::DispersionUnit& idler, std::uint64_t events,
                     std::uint64_t seed, std::uint64_t config_hash) {
  hist.validate();
  auto out = open_out(csv_path);
  out << "# config_hash=" << hash_hex(config_hash) << "\n";
  out << "# rows: signal delay bins, columns: idler delay bins\n";
  for (Eigen::Index r = 0; r < hist.counts.rows(); ++r) {
    for (Eigen::Index c = 0; c < hist.counts.cols(); ++c)
      out << hist.counts(r, c) << (c + 1 < hist.counts.cols() ? ',' : '\n');
  }

  json meta;
  meta["config_hash"] = hash_hex(config_hash);
  meta["bin_ps"] = hist.bin_ps;
  meta["signal_offset_ps"] = hist.signal_offset_ps;
  meta["idler_offset_ps"] = hist.idler_offset_ps;
  meta["period_ns"] = hist.period_ns;
  meta["features"] = hist.features;
  meta["events"] = events;
  meta["seed"] = seed;
  for (const auto& [name, unit] : {std::pair<const char*, const spdc::tofs::DispersionUnit&>{
                                       "signal_arm", signal},
                                   {"idler_arm", idler}}) {
    meta[name]["dispersion_ps_per_nm"] = unit.dispersion_ps_per_nm;
    meta[name]["reference_nm"] = unit.reference_nm;
    meta[name]["insertion_ps"] = unit.insertion_ps;
  }
  auto meta_out = open_out(meta_path);
  meta_out << meta.dump(2) << '\n';
}

HistogramFile read_histogram(const std::string& csv_path, const std::string& meta_path) {
  json meta;
  {
    auto in = open_in(meta_path);
    try {
      in >> meta;
    } catch (const json::exception& e) {
      throw std::runtime_error("io: " + meta_path + ": " + e.what());
    }
  }
  HistogramFile file;
  try {
    file.histogram.bin_ps = meta.at("bin_ps").get<double>();
    file.histogram.signal_offset_ps = meta.at("signal_offset_ps").get<double>();
    file.histogram.idler_offset_ps = meta.at("idler_offset_ps").get<double>();
    file.histogram.period_ns = meta.at("period_ns").get<double>();
    file.histogram.features = meta.at("features").get<int>();
    file.events = meta.at("events").get<std::uint64_t>();
    file.seed = meta.at("seed").get<std::uint64_t>();
    for (const auto& [name, unit] : {std::pair<const char*, spdc::tofs::DispersionUnit*>{
                                         "signal_arm", &file.signal},
                                     {"idler_arm", &file.idler}}) {
      unit->dispersion_ps_per_nm = meta.at(name).at("dispersion_ps_per_nm").get<double>();
      unit->reference_nm = meta.at(name).at("reference_nm").get<double>();
      unit->insertion_ps = meta.at(name).at("insertion_ps").get<double>();
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("io: " + meta_path + ": " + e.what());
  }

  CsvReader reader(csv_path);
  std::string line;
  std::vector<std::vector<std::uint64_t>> rows;
  while (reader.next(line)) {
    rows.emplace_back();
    for (const auto& cell : split_cells(line)) {
      const double value = parse_number(cell, csv_path);
      if (value < 0.0 || value != std::floor(value))
        throw std::runtime_error("io: non-count entry in " + csv_path);
      rows.back().push_back(static_cast<std::uint64_t>(value));
    }
    if (rows.back().size() != rows.front().size())
      throw std::runtime_error("io: ragged row in " + csv_path);
  }
  if (rows.empty()) throw std::runtime_error("io: " + csv_path + " holds no counts");
  file.histogram.counts.resize(static_cast<Eigen::Index>(rows.size()),
                               static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      file.histogram.counts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r][c];
  file.histogram.validate();
  return file;
}

std::string derive_meta_path(const std::string& csv_path) {
  const auto dot = csv_path.rfind(".csv");
  if (dot == csv_path.size() - 4) return csv_path.substr(0, dot) + "_meta.json";
  return csv_path + "_meta.json";
}

// ---------------------------------------------------------------- config ---

namespace {

void require_known_keys(const json& object, const std::vector<std::string>& known,
                        const std::string& where) {
  for (const auto& [key, value] : object.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_field(const json& object, const char* key, T& into, const std::string& where) {
  if (!object.contains(key)) return;
  try {
    into = object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: field '" + std::string(key) + "' in " + where +
                      " has the wrong type");
  }
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: document must be a JSON object");
  require_known_keys(doc,
                     {"material", "crystal", "layout", "grid", "pump", "collection", "tofs",
                      "tpi", "seed", "out", "threads", "fast"},
                     "the top level");

  RunConfig cfg;
  read_field(doc, "material", cfg.material_path, "the top level");
  read_field(doc, "seed", cfg.seed, "the top level");
  read_field(doc, "out", cfg.out_dir, "the top level");
  read_field(doc, "threads", cfg.threads, "the top level");
  read_field(doc, "fast", cfg.fast, "the top level");

  if (doc.contains("crystal")) {
    const auto& crystal = doc.at("crystal");
    require_known_keys(crystal, {"length_mm", "sigma_ratio"}, "crystal");
    read_field(crystal, "length_mm", cfg.crystal_length_mm, "crystal");
    read_field(crystal, "sigma_ratio", cfg.sigma_ratio, "crystal");
  }
  if (doc.contains("layout")) {
    const auto& layout = doc.at("layout");
    require_known_keys(layout, {"generator", "min_width_um"}, "layout");
    read_field(layout, "generator", cfg.layout_generator, "layout");
    read_field(layout, "min_width_um", cfg.min_domain_width_um, "layout");
  }
  if (doc.contains("grid")) {
    const auto& grid = doc.at("grid");
    require_known_keys(grid, {"points", "half_width_nm"}, "grid");
    read_field(grid, "points", cfg.grid_points, "grid");
    read_field(grid, "half_width_nm", cfg.grid_half_width_nm, "grid");
  }
  if (doc.contains("pump")) {
    const auto& pump = doc.at("pump");
    require_known_keys(pump, {"shape", "width_nm", "gdd_ps2"}, "pump");
    read_field(pump, "shape", cfg.pump_shape, "pump");
    read_field(pump, "width_nm", cfg.pump_width_nm, "pump");
    read_field(pump, "gdd_ps2", cfg.pump_gdd_ps2, "pump");
  }
  if (doc.contains("collection")) {
    const auto& collection = doc.at("collection");
    require_known_keys(collection, {"xi"}, "collection");
    read_field(collection, "xi", cfg.collection_xi, "collection");
  }
  if (doc.contains("tofs")) {
    const auto& tofs = doc.at("tofs");
    require_known_keys(tofs,
                       {"jitter_ps", "dispersion_ps_per_nm", "bin_ps", "bins", "features",
                        "period_ns"},
                       "tofs");
    read_field(tofs, "jitter_ps", cfg.tofs_jitter_ps, "tofs");
    read_field(tofs, "dispersion_ps_per_nm", cfg.tofs_dispersion_ps_per_nm, "tofs");
    read_field(tofs, "bin_ps", cfg.tofs_bin_ps, "tofs");
    read_field(tofs, "bins", cfg.tofs_bins, "tofs");
    read_field(tofs, "features", cfg.tofs_features, "tofs");
    read_field(tofs, "period_ns", cfg.tofs_period_ns, "tofs");
  }
  if (doc.contains("tpi")) {
    const auto& tpi = doc.at("tpi");
    require_known_keys(tpi, {"fringe_power_uw", "fringe_spread_uw"}, "tpi");
    read_field(tpi, "fringe_power_uw", cfg.fringe_power_uw, "tpi");
    read_field(tpi, "fringe_spread_uw", cfg.fringe_spread_uw, "tpi");
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return from_json_text(text.str());
}

json RunConfig::to_json() const {
  json doc;
  doc["material"] = material_path;
  doc["crystal"] = {{"length_mm", crystal_length_mm}, {"sigma_ratio", sigma_ratio}};
  doc["layout"] = {{"generator", layout_generator}, {"min_width_um", min_domain_width_um}};
  doc["grid"] = {{"points", grid_points}, {"half_width_nm", grid_half_width_nm}};
  doc["pump"] = {{"shape", pump_shape}, {"width_nm", pump_width_nm}, {"gdd_ps2", pump_gdd_ps2}};
  doc["collection"] = {{"xi", collection_xi}};
  doc["tofs"] = {{"jitter_ps", tofs_jitter_ps},
                 {"dispersion_ps_per_nm", tofs_dispersion_ps_per_nm},
                 {"bin_ps", tofs_bin_ps},
                 {"bins", tofs_bins},
                 {"features", tofs_features},
                 {"period_ns", tofs_period_ns}};
  doc["tpi"] = {{"fringe_power_uw", fringe_power_uw}, {"fringe_spread_uw", fringe_spread_uw}};
  doc["seed"] = seed;
  doc["out"] = out_dir;
  doc["threads"] = threads;
  doc["fast"] = fast;
  return doc;
}

std::string RunConfig::canonical_text() const { return to_json().dump(); }

std::uint64_t RunConfig::hash() const { return spdc::num::fnv1a64(canonical_text()); }

std::string RunConfig::hash_hex() const { return forge::hash_hex(hash()); }

// --------------------------------------------------------------- reports ---

void Report::add_check(const std::string& name, double value, double expected,
                       double tolerance) {
  Check check;
  check.name = name;
  check.value = value;
  check.expected = expected;
  check.tolerance = tolerance;
  check.passed = std::isfinite(value) && std::abs(value - expected) <= tolerance;
  checks.push_back(check);
}

void Report::add_check(const std::string& name, bool passed, double value) {
  Check check;
  check.name = name;
  check.value = value;
  check.expected = std::numeric_limits<double>::quiet_NaN();
  check.tolerance = 0.0;
  check.passed = passed;
  checks.push_back(check);
}

bool Report::all_passed() const {
  for (const auto& check : checks)
    if (!check.passed) return false;
  return true;
}

json Report::to_json() const {
  json doc;
  doc["command"] = command;
  doc["config_hash"] = config_hash;
  doc["seed"] = seed;
  doc["wall_clock_s"] = wall_clock_s;
  doc["results"] = results;
  if (!checks.empty()) {
    doc["checks"] = json::array();
    for (const auto& check : checks) {
      json entry;
      entry["name"] = check.name;
      entry["passed"] = check.passed;
      entry["value"] = check.value;
      if (std::isfinite(check.expected)) {
        entry["expected"] = check.expected;
        entry["tolerance"] = check.tolerance;
      }
      doc["checks"].push_back(entry);
    }
    doc["all_passed"] = all_passed();
  }
  if (!notes.empty()) doc["notes"] = notes;
  return doc;
}

void write_report(const std::string& path, const Report& report) {
  auto out = open_out(path);
  out << report.to_json().dump(2) << '\n';
}

json quantity(double value, double error) {
  json q;
  q["value"] = value;
  q["error"] = error;
  return q;
}

json quantity(double value, double error, const std::string& unit) {
  json q = quantity(value, error);
  q["unit"] = unit;
  return q;
}

}  // namespace forge
