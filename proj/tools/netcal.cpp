// netcal: in-situ calibration for networks of low-cost sensors.
//
// Subcommands:
//   simulate   generate a synthetic scenario (observations + ground truth)
//   calibrate  sample per-sensor calibration-weight posteriors with HMC
//   predict    posterior of the pollution field on a query grid
//
// Exit codes: 0 success, 2 configuration error, 3 no reference sensor,
// 4 sampler initialization failure, 5 artifact mismatch.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>

#include "netcal/io.hpp"
#include "netcal/log.hpp"
#include "netcal/pipeline.hpp"
#include "netcal/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace netcal;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string data_path;
  std::string chains_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int chains_n = 0;
};

io::RunConfig load_config(const CommonArgs& args) {
  io::RunConfig cfg = io::load_run_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    if (cfg.scenario) cfg.scenario->seed = *args.seed;
  }
  return cfg;
}

std::string out_path(const CommonArgs& args, const std::string& name) {
  return (fs::path(args.out_dir) / name).string();
}

void ensure_out_dir(const CommonArgs& args) {
  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  if (ec || !fs::is_directory(args.out_dir))
    throw io::ConfigError("output directory not writable: " + args.out_dir);
}

Dataset load_data(const io::RunConfig& cfg, const CommonArgs& args) {
  std::string path = args.data_path;
  if (path.empty() && cfg.input_data) path = *cfg.input_data;
  if (path.empty())
    throw io::ConfigError("no input data: pass --data or set config 'data'");
  return io::read_observations_csv(path);
}

int cmd_simulate(const CommonArgs& args) {
  const io::RunConfig cfg = load_config(args);
  if (!cfg.scenario)
    throw io::ConfigError("simulate requires a 'scenario' section");
  ensure_out_dir(args);

  const Dataset data = sim::generate(*cfg.scenario);
  io::write_observations_csv(out_path(args, "observations.csv"), data);
  io::write_truth_csv(out_path(args, "truth.csv"), data);

  json summary;
  summary["n_observations"] = data.observations.size();
  summary["n_sensors"] = data.n_sensors;
  summary["seed"] = cfg.seed;
  io::write_text_file(out_path(args, "summary.json"), summary.dump(2) + "\n");
  io::write_manifest(out_path(args, "manifest.json"), "simulate", cfg,
                     {"observations.csv", "truth.csv", "summary.json"});
  log::info("simulate: wrote " + std::to_string(data.observations.size()) +
            " observations from " + std::to_string(data.n_sensors) +
            " sensors to " + args.out_dir);
  return 0;
}

int cmd_calibrate(const CommonArgs& args) {
  const io::RunConfig cfg = load_config(args);
  const Dataset data = load_data(cfg, args);
  if (data.reference_sensors.empty()) {
    log::error("calibrate: dataset has no reference sensor");
    return 3;
  }
  ensure_out_dir(args);

  const auto t0 = std::chrono::steady_clock::now();
  const pipeline::ModelBundle bundle =
      pipeline::build_model(data, cfg.model);
  const VectorXd grid = pipeline::summary_times(data, cfg.model);
  const pipeline::CalibrationOutput result = pipeline::run_calibration(
      bundle, cfg.hmc, cfg.seed, grid, args.chains_n);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  io::write_chains_csv(out_path(args, "chains.csv"), result.chains,
                       bundle.model->layout(), cfg.hmc.thin_export);
  io::write_weight_summary_csv(out_path(args, "weight_summary.csv"),
                               result.weight_rows);

  json summary;
  summary["n_observations"] = data.observations.size();
  summary["n_sensors"] = data.n_sensors;
  summary["latent_dimension"] = bundle.model->dim();
  summary["runtime_seconds"] = seconds;
  summary["seed"] = cfg.seed;
  json accepts = json::array();
  json ess_min = json::array();
  for (const auto& diag : result.chain_diagnostics) {
    accepts.push_back(diag.accept_rate);
    ess_min.push_back(diag.ess.size() ? diag.ess.minCoeff() : 0.0);
  }
  summary["accept_rate"] = accepts;
  summary["ess_min"] = ess_min;
  json medians = json::object();
  for (const auto& row : result.weight_rows) {
    const std::string key = std::to_string(row.sensor);
    if (!medians.contains(key)) medians[key] = json::array();
    medians[key].push_back(row.median);
  }
  summary["weight_medians"] = medians;
  io::write_text_file(out_path(args, "summary.json"), summary.dump(2) + "\n");
  io::write_manifest(out_path(args, "manifest.json"), "calibrate", cfg,
                     {"chains.csv", "weight_summary.csv", "summary.json"});
  log::info("calibrate: " + std::to_string(result.chains.size()) +
            " chains over " + std::to_string(bundle.model->dim()) +
            " latent dimensions in " + std::to_string(seconds) + " s");
  return 0;
}

int cmd_predict(const CommonArgs& args) {
  const io::RunConfig cfg = load_config(args);
  const Dataset data = load_data(cfg, args);
  if (data.reference_sensors.empty()) {
    log::error("predict: dataset has no reference sensor");
    return 3;
  }
  const MatrixXd query = cfg.predict.query_points();
  if (query.rows() == 0)
    throw io::ConfigError("predict: no query points configured");
  ensure_out_dir(args);

  const pipeline::ModelBundle bundle =
      pipeline::build_model(data, cfg.model);
  std::vector<hmc::Chain> chains;
  if (bundle.model->dim() > 0) {
    if (args.chains_path.empty())
      throw io::ConfigError("predict: --chains is required");
    chains = io::read_chains_csv(args.chains_path, bundle.model->layout());
  }
  const auto rows = pipeline::run_prediction(bundle, chains, query,
                                             cfg.model.predict_thin);
  io::write_field_posterior_csv(out_path(args, "field_posterior.csv"), rows);

  json summary;
  summary["n_query_points"] = rows.size();
  summary["n_chains"] = chains.size();
  io::write_text_file(out_path(args, "summary.json"), summary.dump(2) + "\n");
  io::write_manifest(out_path(args, "manifest.json"), "predict", cfg,
                     {"field_posterior.csv", "summary.json"});
  log::info("predict: wrote " + std::to_string(rows.size()) +
            " field posterior rows");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibration engine for networks of low-cost sensors"};
  app.require_subcommand(1);

  CommonArgs args;
  const auto add_common = [&](CLI::App* sub, bool needs_data,
                              bool needs_chains) {
    sub->add_option("--config", args.config_path, "Run configuration (JSON)")
        ->required();
    sub->add_option("--out", args.out_dir, "Output directory");
    sub->add_option("--seed", args.seed, "Override the configured seed");
    if (needs_data)
      sub->add_option("--data", args.data_path, "observations.csv path");
    if (needs_chains)
      sub->add_option("--chains", args.chains_path, "chains.csv path");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "Generate a scenario");
  add_common(simulate, false, false);
  CLI::App* calibrate =
      app.add_subcommand("calibrate", "Sample weight posteriors");
  add_common(calibrate, true, false);
  calibrate->add_option("--chains-n", args.chains_n,
                        "Override the number of HMC chains");
  CLI::App* predict = app.add_subcommand("predict", "Field posterior");
  add_common(predict, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(args);
    if (calibrate->parsed()) return cmd_calibrate(args);
    if (predict->parsed()) return cmd_predict(args);
  } catch (const io::ConfigError& e) {
    log::error(e.what());
    return 2;
  } catch (const pipeline::InitError& e) {
    log::error(e.what());
    return 4;
  } catch (const io::ArtifactMismatch& e) {
    log::error(e.what());
    return 5;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 1;
  }
  return 0;
}
