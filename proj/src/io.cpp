#include "netcal/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace netcal::io {

using nlohmann::json;

namespace {

// Wraps a JSON object, tracking which keys were consumed so that unknown
// keys can be reported with their path.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object())
      throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    return convert<T>(*v, key);
  }

  template <typename T>
  T require(const std::string& key) {
    const json* v = find(key);
    if (!v) throw ConfigError(path_ + "." + key + ": missing required key");
    return convert<T>(*v, key);
  }

  std::string child_path(const std::string& key) const {
    return path_ + "." + key;
  }

  void finish() const {
    for (const auto& item : node_.items())
      if (!seen_.count(item.key()))
        throw ConfigError(path_ + "." + item.key() + ": unknown key");
  }

 private:
  template <typename T>
  T convert(const json& v, const std::string& key) const {
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

sim::FieldSpec parse_field_spec(const json& node, const std::string& path) {
  ObjectReader r(node, path);
  sim::FieldSpec spec;
  const std::string mode = r.get<std::string>("mode", "deterministic");
  if (mode == "deterministic")
    spec.mode = sim::FieldSpec::Mode::deterministic;
  else if (mode == "gp")
    spec.mode = sim::FieldSpec::Mode::gp;
  else
    throw ConfigError(path + ".mode: expected 'deterministic' or 'gp'");
  spec.mean = r.get<double>("mean", spec.mean);
  spec.kernel.variance = r.get<double>("variance", spec.kernel.variance);
  Eigen::Vector3d ls = spec.kernel.lengthscales;
  ls[0] = r.get<double>("lengthscale_x", ls[0]);
  ls[1] = r.get<double>("lengthscale_y", ls[1]);
  ls[2] = r.get<double>("lengthscale_t", ls[2]);
  spec.kernel.lengthscales = ls;
  spec.amp1 = r.get<double>("amp1", spec.amp1);
  spec.period1 = r.get<double>("period1", spec.period1);
  spec.amp2 = r.get<double>("amp2", spec.amp2);
  spec.period2 = r.get<double>("period2", spec.period2);
  r.finish();
  try {
    spec.kernel.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return spec;
}

sim::ScenarioConfig parse_scenario(const json& node, const std::string& path,
                                   std::uint64_t seed) {
  ObjectReader r(node, path);
  sim::ScenarioConfig cfg;
  cfg.seed = seed;
  const std::string kind = r.require<std::string>("kind");
  if (kind == "two_sensor")
    cfg.kind = sim::ScenarioKind::two_sensor;
  else if (kind == "network")
    cfg.kind = sim::ScenarioKind::network;
  else if (kind == "clogging")
    cfg.kind = sim::ScenarioKind::clogging;
  else
    throw ConfigError(path +
                      ".kind: expected 'two_sensor', 'network' or 'clogging'");
  cfg.t_begin = r.get<double>("t_begin", cfg.t_begin);
  cfg.t_end = r.get<double>("t_end", cfg.t_end);
  cfg.cadence = r.get<double>("cadence", cfg.cadence);
  cfg.noise_sigma = r.get<double>("noise_sigma", cfg.noise_sigma);
  if (const json* f = r.find("field"))
    cfg.field = parse_field_spec(*f, r.child_path("field"));
  if (const json* t = r.find("two_sensor")) {
    ObjectReader tr(*t, r.child_path("two_sensor"));
    cfg.two_sensor.opc_weight =
        tr.get<double>("opc_weight", cfg.two_sensor.opc_weight);
    cfg.two_sensor.separation_speed =
        tr.get<double>("separation_speed", cfg.two_sensor.separation_speed);
    tr.finish();
  }
  if (const json* n = r.find("network")) {
    ObjectReader nr(*n, r.child_path("network"));
    auto& net = cfg.network;
    net.extent_km = nr.get<double>("extent_km", net.extent_km);
    net.true_weights =
        nr.get<std::vector<double>>("true_weights", net.true_weights);
    net.travel_speed = nr.get<double>("travel_speed", net.travel_speed);
    net.dwell_site = nr.get<double>("dwell_site", net.dwell_site);
    net.dwell_ref_mobile1 =
        nr.get<double>("dwell_ref_mobile1", net.dwell_ref_mobile1);
    net.dwell_ref_mobile2 =
        nr.get<double>("dwell_ref_mobile2", net.dwell_ref_mobile2);
    nr.finish();
  }
  if (const json* c = r.find("clogging")) {
    ObjectReader cr(*c, r.child_path("clogging"));
    auto& clog = cfg.clogging;
    clog.initial_weight = cr.get<double>("initial_weight", clog.initial_weight);
    clog.min_weight = cr.get<double>("min_weight", clog.min_weight);
    clog.maintenance_frac =
        cr.get<double>("maintenance_frac", clog.maintenance_frac);
    clog.band_lo = cr.get<double>("band_lo", clog.band_lo);
    clog.band_hi = cr.get<double>("band_hi", clog.band_hi);
    cr.finish();
  }
  r.finish();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

PriorSettings parse_prior(const json& node, const std::string& path) {
  ObjectReader r(node, path);
  PriorSettings prior;
  const std::string type = r.get<std::string>("type", "sparse_gp");
  if (type == "gaussian")
    prior.type = PriorSettings::Type::gaussian;
  else if (type == "sparse_gp")
    prior.type = PriorSettings::Type::sparse_gp;
  else
    throw ConfigError(path + ".type: expected 'gaussian' or 'sparse_gp'");
  prior.mean = r.get<double>("mean", prior.mean);
  prior.variance = r.get<double>("variance", prior.variance);
  prior.lengthscale = r.get<double>("lengthscale", prior.lengthscale);
  prior.ts_spacing = r.get<double>("ts_spacing", prior.ts_spacing);
  r.finish();
  return prior;
}

ModelSettings parse_model(const json& node, const std::string& path) {
  ObjectReader r(node, path);
  ModelSettings m;
  if (const json* f = r.find("field")) {
    ObjectReader fr(*f, r.child_path("field"));
    m.field_variance = fr.get<double>("variance", m.field_variance);
    m.lengthscale_x = fr.get<double>("lengthscale_x", m.lengthscale_x);
    m.lengthscale_y = fr.get<double>("lengthscale_y", m.lengthscale_y);
    m.lengthscale_t = fr.get<double>("lengthscale_t", m.lengthscale_t);
    fr.finish();
  }
  m.noise_sigma = r.get<double>("noise_sigma", m.noise_sigma);
  m.standardize = r.get<bool>("standardize", m.standardize);
  if (const json* fm = r.find("field_mean")) {
    if (fm->is_string()) {
      if (fm->get<std::string>() != "auto")
        throw ConfigError(path + ".field_mean: expected a number or 'auto'");
    } else if (fm->is_number()) {
      m.field_mean = fm->get<double>();
    } else {
      throw ConfigError(path + ".field_mean: expected a number or 'auto'");
    }
  }
  if (const json* p = r.find("prior"))
    m.prior = parse_prior(*p, r.child_path("prior"));
  if (const json* g = r.find("summary_grid")) {
    ObjectReader gr(*g, r.child_path("summary_grid"));
    GridSpec grid;
    grid.start = gr.require<double>("start");
    grid.stop = gr.require<double>("stop");
    grid.step = gr.require<double>("step");
    gr.finish();
    if (!(grid.step > 0.0) || !(grid.stop >= grid.start))
      throw ConfigError(path + ".summary_grid: degenerate grid");
    m.summary_grid = grid;
  }
  m.predict_thin = r.get<int>("predict_thin", m.predict_thin);
  if (m.predict_thin < 1)
    throw ConfigError(path + ".predict_thin: must be >= 1");
  r.finish();

  if (!(m.field_variance > 0.0) || !(m.lengthscale_x > 0.0) ||
      !(m.lengthscale_y > 0.0) || !(m.lengthscale_t > 0.0))
    throw ConfigError(path + ".field: variance and lengthscales must be > 0");
  if (!(m.noise_sigma >= 0.0))
    throw ConfigError(path + ".noise_sigma: must be >= 0");
  if (!(m.prior.variance > 0.0))
    throw ConfigError(path + ".prior.variance: must be > 0");
  if (!(m.prior.lengthscale > 0.0))
    throw ConfigError(path + ".prior.lengthscale: must be > 0");
  return m;
}

HmcSettings parse_hmc(const json& node, const std::string& path) {
  ObjectReader r(node, path);
  HmcSettings h;
  h.n_chains = r.get<int>("n_chains", h.n_chains);
  h.n_samples = r.get<int>("n_samples", h.n_samples);
  h.n_burnin = r.get<int>("n_burnin", h.n_burnin);
  h.step_size = r.get<double>("step_size", h.step_size);
  h.n_leapfrog = r.get<int>("n_leapfrog", h.n_leapfrog);
  h.adapt_step_size = r.get<bool>("adapt_step_size", h.adapt_step_size);
  h.target_accept = r.get<double>("target_accept", h.target_accept);
  h.init_jitter = r.get<double>("init_jitter", h.init_jitter);
  h.thin_export = r.get<int>("thin_export", h.thin_export);
  h.mass = r.get<std::vector<double>>("mass", h.mass);
  for (double m : h.mass)
    if (!(m > 0.0))
      throw ConfigError(path + ".mass: entries must be > 0");
  if (h.n_chains < 1) throw ConfigError(path + ".n_chains: must be >= 1");
  if (h.thin_export < 1) throw ConfigError(path + ".thin_export: must be >= 1");
  r.finish();
  return h;
}

PredictSettings parse_predict(const json& node, const std::string& path) {
  ObjectReader r(node, path);
  PredictSettings p;
  if (const json* pts = r.find("points")) {
    if (!pts->is_array())
      throw ConfigError(path + ".points: expected an array of [x, y, t]");
    for (const auto& item : *pts) {
      if (!item.is_array() || item.size() != 3)
        throw ConfigError(path + ".points: each point must be [x, y, t]");
      p.points.push_back(
          {item[0].get<double>(), item[1].get<double>(), item[2].get<double>()});
    }
  }
  if (const json* g = r.find("grid")) {
    ObjectReader gr(*g, r.child_path("grid"));
    p.xs = gr.require<std::vector<double>>("x");
    p.ys = gr.require<std::vector<double>>("y");
    p.ts = gr.require<std::vector<double>>("t");
    gr.finish();
  }
  r.finish();
  return p;
}

}  // namespace

VectorXd GridSpec::times() const {
  const auto n =
      static_cast<Eigen::Index>(std::floor((stop - start) / step + 1e-9)) + 1;
  VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i)
    out[i] = start + step * static_cast<double>(i);
  return out;
}

MatrixXd PredictSettings::query_points() const {
  std::vector<SpaceTimePoint> all = points;
  for (double t : ts)
    for (double y : ys)
      for (double x : xs) all.push_back({x, y, t});
  return pack_points(all);
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }

  ObjectReader r(doc, "config");
  RunConfig cfg;
  cfg.version = r.require<int>("version");
  if (cfg.version != 1)
    throw ConfigError("config.version: unsupported version (expected 1)");
  cfg.seed = r.get<std::uint64_t>("seed", 0);

  const json* scenario = r.find("scenario");
  const json* data = r.find("data");
  if (scenario && data)
    throw ConfigError(
        "config: 'scenario' and 'data' are mutually exclusive");
  if (scenario)
    cfg.scenario = parse_scenario(*scenario, "config.scenario", cfg.seed);
  if (data) {
    if (!data->is_string())
      throw ConfigError("config.data: expected a path string");
    cfg.input_data = data->get<std::string>();
  }

  if (const json* m = r.find("model"))
    cfg.model = parse_model(*m, "config.model");
  if (const json* h = r.find("hmc")) cfg.hmc = parse_hmc(*h, "config.hmc");
  if (const json* p = r.find("predict"))
    cfg.predict = parse_predict(*p, "config.predict");
  r.finish();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_text_file(path));
}

std::string canonical_config_json(const RunConfig& cfg) {
  json doc;
  doc["version"] = cfg.version;
  doc["seed"] = cfg.seed;
  if (cfg.scenario) {
    const auto& s = *cfg.scenario;
    json sj;
    switch (s.kind) {
      case sim::ScenarioKind::two_sensor: sj["kind"] = "two_sensor"; break;
      case sim::ScenarioKind::network: sj["kind"] = "network"; break;
      case sim::ScenarioKind::clogging: sj["kind"] = "clogging"; break;
    }
    sj["t_begin"] = s.t_begin;
    sj["t_end"] = s.t_end;
    sj["cadence"] = s.cadence;
    sj["noise_sigma"] = s.noise_sigma;
    sj["field"] = {
        {"mode",
         s.field.mode == sim::FieldSpec::Mode::deterministic ? "deterministic"
                                                             : "gp"},
        {"mean", s.field.mean},
        {"variance", s.field.kernel.variance},
        {"lengthscale_x", s.field.kernel.lengthscales[0]},
        {"lengthscale_y", s.field.kernel.lengthscales[1]},
        {"lengthscale_t", s.field.kernel.lengthscales[2]},
        {"amp1", s.field.amp1},
        {"period1", s.field.period1},
        {"amp2", s.field.amp2},
        {"period2", s.field.period2}};
    sj["two_sensor"] = {{"opc_weight", s.two_sensor.opc_weight},
                        {"separation_speed", s.two_sensor.separation_speed}};
    sj["network"] = {{"extent_km", s.network.extent_km},
                     {"true_weights", s.network.true_weights},
                     {"travel_speed", s.network.travel_speed},
                     {"dwell_site", s.network.dwell_site},
                     {"dwell_ref_mobile1", s.network.dwell_ref_mobile1},
                     {"dwell_ref_mobile2", s.network.dwell_ref_mobile2}};
    sj["clogging"] = {{"initial_weight", s.clogging.initial_weight},
                      {"min_weight", s.clogging.min_weight},
                      {"maintenance_frac", s.clogging.maintenance_frac},
                      {"band_lo", s.clogging.band_lo},
                      {"band_hi", s.clogging.band_hi}};
    doc["scenario"] = sj;
  }
  if (cfg.input_data) doc["data"] = *cfg.input_data;

  json mj;
  mj["field"] = {{"variance", cfg.model.field_variance},
                 {"lengthscale_x", cfg.model.lengthscale_x},
                 {"lengthscale_y", cfg.model.lengthscale_y},
                 {"lengthscale_t", cfg.model.lengthscale_t}};
  mj["noise_sigma"] = cfg.model.noise_sigma;
  mj["standardize"] = cfg.model.standardize;
  if (cfg.model.field_mean)
    mj["field_mean"] = *cfg.model.field_mean;
  else
    mj["field_mean"] = "auto";
  mj["prior"] = {
      {"type", cfg.model.prior.type == PriorSettings::Type::gaussian
                   ? "gaussian"
                   : "sparse_gp"},
      {"mean", cfg.model.prior.mean},
      {"variance", cfg.model.prior.variance},
      {"lengthscale", cfg.model.prior.lengthscale},
      {"ts_spacing", cfg.model.prior.ts_spacing}};
  if (cfg.model.summary_grid)
    mj["summary_grid"] = {{"start", cfg.model.summary_grid->start},
                          {"stop", cfg.model.summary_grid->stop},
                          {"step", cfg.model.summary_grid->step}};
  mj["predict_thin"] = cfg.model.predict_thin;
  doc["model"] = mj;

  doc["hmc"] = {{"n_chains", cfg.hmc.n_chains},
                {"n_samples", cfg.hmc.n_samples},
                {"n_burnin", cfg.hmc.n_burnin},
                {"step_size", cfg.hmc.step_size},
                {"n_leapfrog", cfg.hmc.n_leapfrog},
                {"adapt_step_size", cfg.hmc.adapt_step_size},
                {"target_accept", cfg.hmc.target_accept},
                {"init_jitter", cfg.hmc.init_jitter},
                {"thin_export", cfg.hmc.thin_export},
                {"mass", cfg.hmc.mass}};

  json pj;
  json pts = json::array();
  for (const auto& p : cfg.predict.points)
    pts.push_back(json::array({p.x, p.y, p.t}));
  pj["points"] = pts;
  pj["grid"] = {{"x", cfg.predict.xs}, {"y", cfg.predict.ys},
                {"t", cfg.predict.ts}};
  doc["predict"] = pj;
  return doc.dump();
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001B3ull;
  }
  return hash;
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::runtime_error(context + ": malformed number '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const std::string& context) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const long v = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw std::runtime_error(context + ": malformed integer '" + s + "'");
  return v;
}

// Returns data rows (header validated and removed).
std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               const std::string& header) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header)
    throw std::runtime_error(path + ": unexpected header '" + line + "'");
  const std::size_t n_cols = split_csv_line(header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != n_cols)
      throw std::runtime_error(path + ": wrong number of fields in '" + line +
                               "'");
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

void write_observations_csv(const std::string& path, const Dataset& data) {
  std::ostringstream out;
  out << "sensor_id,x_km,y_km,t,value,is_reference\n";
  for (const auto& obs : data.observations) {
    out << obs.sensor << ',' << format_double(obs.where.x) << ','
        << format_double(obs.where.y) << ',' << format_double(obs.where.t)
        << ',' << format_double(obs.value) << ','
        << (data.is_reference(obs.sensor) ? 1 : 0) << '\n';
  }
  write_text_file(path, out.str());
}

Dataset read_observations_csv(const std::string& path) {
  Dataset data;
  std::map<int, int> ref_flag;
  for (const auto& row :
       read_csv(path, "sensor_id,x_km,y_km,t,value,is_reference")) {
    Observation obs;
    obs.sensor = static_cast<int>(parse_long(row[0], path));
    obs.where = {parse_double(row[1], path), parse_double(row[2], path),
                 parse_double(row[3], path)};
    obs.value = parse_double(row[4], path);
    const int flag = static_cast<int>(parse_long(row[5], path));
    auto [it, inserted] = ref_flag.emplace(obs.sensor, flag);
    if (!inserted && it->second != flag)
      throw std::runtime_error(path + ": inconsistent is_reference flags");
    data.observations.push_back(obs);
    data.n_sensors = std::max(data.n_sensors, obs.sensor + 1);
  }
  for (const auto& [sensor, flag] : ref_flag)
    if (flag) data.reference_sensors.insert(sensor);
  data.validate();
  return data;
}

void write_truth_csv(const std::string& path, const Dataset& data) {
  if (!data.truth) throw std::invalid_argument("write_truth_csv: no truth");
  std::ostringstream out;
  out << "sensor_id,t,true_field,true_weight\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto& obs = data.observations[idx];
    out << obs.sensor << ',' << format_double(obs.where.t) << ','
        << format_double(data.truth->field[idx]) << ','
        << format_double(data.truth->weight[idx]) << '\n';
  }
  write_text_file(path, out.str());
}

void attach_truth_csv(const std::string& path, Dataset& data) {
  const auto rows = read_csv(path, "sensor_id,t,true_field,true_weight");
  if (rows.size() != data.observations.size())
    throw std::runtime_error(path + ": truth row count mismatch");
  Dataset::Truth truth;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(parse_long(rows[i][0], path)) !=
        data.observations[i].sensor)
      throw std::runtime_error(path + ": truth sensor mismatch");
    truth.field.push_back(parse_double(rows[i][2], path));
    truth.weight.push_back(parse_double(rows[i][3], path));
  }
  data.truth = std::move(truth);
}

void write_chains_csv(const std::string& path,
                      const std::vector<hmc::Chain>& chains,
                      const LatentLayout& layout, int thin) {
  if (thin < 1) throw std::invalid_argument("write_chains_csv: thin < 1");
  std::ostringstream out;
  out << "chain_id,sample_idx,sensor_id,ts_idx,z_value\n";
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& chain = chains[c];
    for (Eigen::Index i = 0; i < chain.n_samples(); i += thin) {
      for (std::size_t s = 0; s < layout.offset.size(); ++s) {
        if (layout.offset[s] < 0) continue;
        for (int k = 0; k < layout.block[s]; ++k) {
          out << c << ',' << i << ',' << s << ',' << k << ','
              << format_double(chain.samples(i, layout.offset[s] + k)) << '\n';
        }
      }
    }
  }
  write_text_file(path, out.str());
}

std::vector<hmc::Chain> read_chains_csv(const std::string& path,
                                        const LatentLayout& layout) {
  // chain id -> sample idx -> flat vector
  std::map<long, std::map<long, VectorXd>> table;
  for (const auto& row :
       read_csv(path, "chain_id,sample_idx,sensor_id,ts_idx,z_value")) {
    const long chain_id = parse_long(row[0], path);
    const long sample_idx = parse_long(row[1], path);
    const long sensor = parse_long(row[2], path);
    const long ts_idx = parse_long(row[3], path);
    if (sensor < 0 ||
        sensor >= static_cast<long>(layout.offset.size()) ||
        layout.offset[static_cast<std::size_t>(sensor)] < 0 ||
        ts_idx < 0 ||
        ts_idx >= layout.block[static_cast<std::size_t>(sensor)])
      throw ArtifactMismatch(path + ": chains do not match the model layout");
    auto& flat = table[chain_id][sample_idx];
    if (flat.size() == 0) {
      flat.resize(layout.total);
      flat.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
    flat[layout.offset[static_cast<std::size_t>(sensor)] + ts_idx] =
        parse_double(row[4], path);
  }
  if (table.empty()) throw ArtifactMismatch(path + ": no chain samples");

  std::vector<hmc::Chain> chains;
  for (const auto& [chain_id, samples] : table) {
    hmc::Chain chain;
    chain.samples.resize(static_cast<Eigen::Index>(samples.size()),
                         layout.total);
    Eigen::Index r = 0;
    for (const auto& [sample_idx, flat] : samples) {
      if (!flat.allFinite())
        throw ArtifactMismatch(path + ": incomplete sample (missing latent rows)");
      chain.samples.row(r++) = flat.transpose();
    }
    chain.log_densities = VectorXd::Zero(chain.samples.rows());
    chain.accept_rate = 0.0;
    chains.push_back(std::move(chain));
  }
  return chains;
}

void write_weight_summary_csv(const std::string& path,
                              const std::vector<WeightSummaryRow>& rows) {
  std::ostringstream out;
  out << "sensor_id,t,median,se,q025,q975\n";
  for (const auto& r : rows) {
    out << r.sensor << ',' << format_double(r.t) << ','
        << format_double(r.median) << ',' << format_double(r.se) << ','
        << format_double(r.q025) << ',' << format_double(r.q975) << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<WeightSummaryRow> read_weight_summary_csv(const std::string& path) {
  std::vector<WeightSummaryRow> rows;
  for (const auto& row :
       read_csv(path, "sensor_id,t,median,se,q025,q975")) {
    WeightSummaryRow r;
    r.sensor = static_cast<int>(parse_long(row[0], path));
    r.t = parse_double(row[1], path);
    r.median = parse_double(row[2], path);
    r.se = parse_double(row[3], path);
    r.q025 = parse_double(row[4], path);
    r.q975 = parse_double(row[5], path);
    rows.push_back(r);
  }
  return rows;
}

void write_field_posterior_csv(const std::string& path,
                               const std::vector<FieldPosteriorRow>& rows) {
  std::ostringstream out;
  out << "x_km,y_km,t,median,se\n";
  for (const auto& r : rows) {
    out << format_double(r.x) << ',' << format_double(r.y) << ','
        << format_double(r.t) << ',' << format_double(r.median) << ','
        << format_double(r.se) << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<FieldPosteriorRow> read_field_posterior_csv(
    const std::string& path) {
  std::vector<FieldPosteriorRow> rows;
  for (const auto& row : read_csv(path, "x_km,y_km,t,median,se")) {
    FieldPosteriorRow r;
    r.x = parse_double(row[0], path);
    r.y = parse_double(row[1], path);
    r.t = parse_double(row[2], path);
    r.median = parse_double(row[3], path);
    r.se = parse_double(row[4], path);
    rows.push_back(r);
  }
  return rows;
}

void write_manifest(const std::string& path, const std::string& command,
                    const RunConfig& config,
                    const std::vector<std::string>& outputs) {
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(canonical_config_json(config))));
  json doc;
  doc["command"] = command;
  doc["seed"] = config.seed;
  doc["config_hash"] = std::string(hash);
  doc["outputs"] = outputs;
  write_text_file(path, doc.dump(2) + "\n");
}

}  // namespace netcal::io
