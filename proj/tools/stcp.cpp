#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stcp/config.hpp"
#include "stcp/error.hpp"
#include "stcp/pipeline.hpp"
#include "stcp/text.hpp"

namespace {

constexpr int kAssertFailed = 5;

struct Options {
  std::string config;
  std::string experiment;
  std::string out;
  std::string method;
  std::string alphas;
  std::string sizes;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> workers;
  bool assert_bounds = false;
};

stcp::ExperimentConfig load(const Options& o) {
  if (o.config.empty() == o.experiment.empty()) {
    stcp::fail(stcp::ErrorKind::Config, "give exactly one of --config or --experiment");
  }
  stcp::ExperimentConfig cfg =
      o.config.empty() ? stcp::default_config(o.experiment) : stcp::parse_config(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.workers) cfg.workers = *o.workers;
  if (!o.alphas.empty()) {
    const auto parts = stcp::split(o.alphas, ':');
    if (parts.size() != 3) stcp::fail(stcp::ErrorKind::Config, "--alphas expects lo:hi:step");
    cfg.alphas = stcp::alpha_grid(stcp::parse_double(parts[0], "--alphas lo"),
                                  stcp::parse_double(parts[1], "--alphas hi"),
                                  stcp::parse_double(parts[2], "--alphas step"));
  }
  if (!o.sizes.empty()) {
    cfg.ncal_sizes.clear();
    for (const auto& p : stcp::split(o.sizes, ',')) {
      const double v = stcp::parse_double(p, "--sizes");
      if (!(v >= 1.0) || v != static_cast<double>(static_cast<std::size_t>(v))) {
        stcp::fail(stcp::ErrorKind::Config, "--sizes: '" + p + "' is not a positive integer");
      }
      cfg.ncal_sizes.push_back(static_cast<std::size_t>(v));
    }
  }
  if (!o.method.empty()) cfg.methods = {stcp::method_from_string(o.method)};
  stcp::validate(cfg);
  return cfg;
}

void report_stages(const stcp::Pipeline& p) {
  for (const auto& e : p.events()) {
    std::cerr << (e.ran ? "ran    " : "cached ") << e.stage << "\n";
  }
}

int run_command(const std::string& cmd, const Options& o) {
  stcp::Pipeline p(load(o));
  const auto& methods = p.config().methods;
  int status = 0;
  if (cmd == "gen") {
    for (auto s : {stcp::Split::Train, stcp::Split::Calibration, stcp::Split::Validation}) p.ensure_data(s);
  } else if (cmd == "train") {
    for (auto m : methods) p.ensure_models(m);
  } else if (cmd == "calibrate") {
    for (auto m : methods) p.ensure_quantiles(m);
  } else if (cmd == "band") {
    for (auto m : methods) p.ensure_band(m);
  } else if (cmd == "validate") {
    for (auto m : methods) {
      p.ensure_report(m);
      if (!o.assert_bounds) continue;
      p.ensure_sweep(m);
      const bool ok = stcp::sweep_passes(stcp::read_sweep_file(p.sweep_csv(m)));
      std::cout << stcp::to_string(m) << ": " << (ok ? "coverage bound met" : "coverage bound violated")
                << " (" << p.sweep_csv(m).string() << ")\n";
      if (!ok) status = kAssertFailed;
    }
  } else if (cmd == "sweep") {
    for (auto m : methods) p.ensure_sweep(m);
  } else if (cmd == "study-ncal") {
    for (auto m : methods) p.ensure_study(m);
  } else if (cmd == "plot") {
    p.ensure_plots();
  } else if (cmd == "run") {
    p.run();
  }
  if (cmd != "run") p.write_manifest();
  report_stages(p);
  std::cout << p.root().string() << "\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal error bars for PDE surrogates"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen", "generate train/calibration/validation datasets"},
      {"train", "train surrogate models"},
      {"calibrate", "compute conformal quantile fields"},
      {"band", "build prediction bands on the validation set"},
      {"validate", "empirical coverage reports"},
      {"sweep", "coverage sweep over the alpha grid"},
      {"study-ncal", "calibration-size study"},
      {"plot", "emit SVG/CSV figures"},
      {"run", "all stages"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "experiment JSON");
    sub->add_option("--experiment", o.experiment, "use built-in defaults (poisson|convdiff|wave)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--method", o.method, "aer|std|cqr (default: all configured)");
    sub->add_option("--alpha", o.alpha, "miscoverage level for calibrate/band/validate");
    sub->add_option("--alphas", o.alphas, "alpha grid lo:hi:step");
    sub->add_option("--sizes", o.sizes, "calibration sizes, comma separated");
    sub->add_option("--workers", o.workers, "worker threads");
    if (name == "validate") sub->add_flag("--assert", o.assert_bounds, "exit 5 if any sweep point misses its bound");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return run_command(app.get_subcommands().front()->get_name(), o);
  } catch (const stcp::Error& e) {
    std::cerr << "stcp: " << stcp::to_string(e.kind()) << ": " << e.what() << "\n";
    return stcp::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "stcp: " << e.what() << "\n";
    return 1;
  }
}
