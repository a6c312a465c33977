#include "stcp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "stcp/error.hpp"
#include "stcp/hash.hpp"
#include "stcp/neural.hpp"
#include "stcp/random.hpp"
#include "stcp/svg.hpp"
#include "stcp/tensor_io.hpp"
#include "stcp/text.hpp"

namespace stcp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStageFile = "stage.json";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kPlotVersion = "stcp-plots/1";
constexpr std::array<double, 2> kSliceAlphas{0.1, 0.5};

// Seed stream indices below the master seed.
constexpr std::uint64_t kSplitStream = 1;   // + split index
constexpr std::uint64_t kModelStream = 10;  // + model index
constexpr std::uint64_t kMcStream = 20;     // + split index
constexpr std::uint64_t kStudyStream = 30;

std::uint64_t split_index(Split s) {
  switch (s) {
    case Split::Train: return 0;
    case Split::Calibration: return 1;
    case Split::Validation: return 2;
  }
  return 0;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot read " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }
json read_json(const fs::path& path) { return json::parse(read_text(path)); }

// Regular files under `dir`, relative and sorted, excluding `skip`.
std::vector<std::string> list_files(const fs::path& dir, const std::string& skip) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel != skip) out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct ModelSpec {
  std::string name;  // checkpoint subdirectory ("" for single-model methods)
  std::uint64_t index;
  double dropout;
  Loss loss;
};

std::vector<ModelSpec> model_specs(Method m, const SurrogateConfig& s) {
  Loss aer{s.aer_loss, 0.5};
  Loss sd{s.std_loss, 0.5};
  switch (m) {
    case Method::Aer: return {{"", 0, 0.0, aer}};
    case Method::Std: return {{"", 1, s.dropout, sd}};
    case Method::Cqr:
      return {{"lo", 2, 0.0, Loss::pinball(s.cqr_lo)},
              {"mid", 3, 0.0, Loss::pinball(s.cqr_mid)},
              {"hi", 4, 0.0, Loss::pinball(s.cqr_hi)}};
  }
  return {};
}

SurrogateOutputs select_outputs(const SurrogateOutputs& o, std::span<const std::size_t> idx) {
  auto pick = [&](const TensorStack& s) { return s.count() ? s.select(idx) : TensorStack{}; };
  return {o.method, pick(o.center), pick(o.sigma), pick(o.lower), pick(o.upper)};
}

std::string color_for(std::size_t i) {
  static const std::array<const char*, 6> palette{"#1f77b4", "#d62728", "#2ca02c",
                                                  "#9467bd", "#ff7f0e", "#8c564b"};
  return palette[i % palette.size()];
}

// Coordinates of the slice axis for the final output frame.
std::vector<double> slice_coords(const SolverSetup& setup, std::size_t n) {
  switch (setup.kind) {
    case SolverKind::Poisson: {
      std::vector<double> x(n);
      for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i) / static_cast<double>(n - 1);
      return x;
    }
    case SolverKind::ConvDiff: return convdiff_grid(setup.convdiff);
    case SolverKind::Wave: return wave_grid(setup.wave);
  }
  return {};
}

}  // namespace

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Calibration: return "calibration";
    case Split::Validation: return "validation";
  }
  return "?";
}

Pipeline::Pipeline(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  canonical_ = canonical_json(cfg_);
  config_hash_ = json_hash(canonical_);
  // Analysis-only fields stay out of the directory name so that changing
  // them reuses data and models; stage keys still track them.
  json base = canonical_;
  for (const char* k : {"alpha", "alphas", "ncal_sizes", "methods"}) base.erase(k);
  root_ = cfg_.output_dir / (cfg_.experiment + "-" + json_hash(base).substr(0, 16));
}

fs::path Pipeline::dir(const std::string& stage, Method m) const { return root_ / stage / to_string(m); }
fs::path Pipeline::data_dir(Split s) const { return root_ / "data" / to_string(s); }
fs::path Pipeline::sweep_csv(Method m) const { return dir("sweeps", m) / "sweep.csv"; }
fs::path Pipeline::study_csv(Method m, std::size_t n) const {
  return dir("study", m) / ("ncal_" + std::to_string(n) + ".csv");
}
fs::path Pipeline::report_json_path(Method m, bool calibrated) const {
  return dir("reports", m) / (calibrated ? "coverage.json" : "uncalibrated.json");
}

bool Pipeline::stage(const std::string& name, const fs::path& d, const json& key,
                     const std::function<void()>& produce) {
  const std::string key_hash = json_hash(key);
  const fs::path marker = d / kStageFile;
  if (auto it = verified_.find(d); it != verified_.end() && it->second == key_hash) return false;
  try {
    if (fs::exists(marker)) {
      const json s = read_json(marker);
      bool fresh = s.value("key", "") == key_hash;
      if (fresh) {
        for (const auto& [file, sha] : s.at("files").items()) {
          if (!fs::exists(d / file) || sha256_file(d / file) != sha.get<std::string>()) {
            fresh = false;
            break;
          }
        }
      }
      if (fresh) {
        events_.push_back({name, d, false});
        verified_[d] = key_hash;
        return false;
      }
    }
  } catch (const json::exception&) {
    // An unreadable marker means the stage is stale.
  }

  try {
    fs::remove_all(d);
    fs::create_directories(d);
    produce();
    json files = json::object();
    for (const auto& f : list_files(d, kStageFile)) files[f] = sha256_file(d / f);
    write_json(marker, {{"stage", name},
                        {"key", key_hash},
                        {"config_hash", config_hash_},
                        {"seed", cfg_.seed},
                        {"inputs", key},
                        {"files", files}});
  } catch (const Error& e) {
    fail(e.kind(), "stage " + name + " (" + d.string() + "): " + e.what());
  } catch (const fs::filesystem_error& e) {
    fail(ErrorKind::Io, "stage " + name + " (" + d.string() + "): " + e.what());
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "stage " + name + " (" + d.string() + "): " + e.what());
  }
  events_.push_back({name, d, true});
  verified_[d] = key_hash;
  return true;
}

json Pipeline::data_key(Split s) const {
  return {{"stage", "data"},
          {"solver_version", kSolverVersion},
          {"experiment", cfg_.experiment},
          {"solver", canonical_.at("solver")},
          {"window", canonical_.at("window")},
          {"regime", canonical_.at(to_string(s))},
          {"seed", derive_seed(cfg_.seed, kSplitStream + split_index(s))}};
}

json Pipeline::model_key(Method m) const {
  return {{"stage", "models"},
          {"method", to_string(m)},
          {"data", data_key(Split::Train)},
          {"surrogate", canonical_.at("surrogate")},
          {"training", canonical_.at("training")},
          {"seed", cfg_.seed}};
}

json Pipeline::predictions_key(Method m) const {
  return {{"stage", "predictions"},
          {"model", model_key(m)},
          {"calibration", data_key(Split::Calibration)},
          {"validation", data_key(Split::Validation)}};
}

json Pipeline::quantiles_key(Method m) const {
  return {{"stage", "quantiles"}, {"predictions", predictions_key(m)}, {"alpha", cfg_.alpha}};
}

void Pipeline::ensure_data(Split s) {
  const RegimeConfig& r = s == Split::Train         ? cfg_.train
                          : s == Split::Calibration ? cfg_.calibration
                                                    : cfg_.validation;
  const bool ran = stage(std::string("gen/") + to_string(s), data_dir(s), data_key(s), [&] {
    const std::uint64_t seed = derive_seed(cfg_.seed, kSplitStream + split_index(s));
    const DesignMatrix design = latin_hypercube(r.params, r.n, seed);
    Dataset d = generate_dataset(design, cfg_.setup, cfg_.window, r.fixed, seed, cfg_.workers);
    write_dataset(data_dir(s), d);
  });
  if (ran) truth_cache_.erase(s);
}

TensorStack Pipeline::load_truth(Split s) const {
  auto it = truth_cache_.find(s);
  if (it == truth_cache_.end()) {
    it = truth_cache_.emplace(s, output_stack(read_dataset(data_dir(s)))).first;
  }
  return it->second;
}

void Pipeline::ensure_models(Method m) {
  ensure_data(Split::Train);
  stage(std::string("train/") + to_string(m), dir("models", m), model_key(m), [&] {
    const Dataset train_set = read_dataset(data_dir(Split::Train));
    const TensorStack x = input_stack(train_set);
    const TensorStack y = output_stack(train_set);
    for (const auto& spec : model_specs(m, cfg_.surrogate)) {
      MlpConfig mcfg;
      mcfg.layer_sizes.push_back(x.cells());
      for (std::size_t h : cfg_.surrogate.hidden) mcfg.layer_sizes.push_back(h);
      mcfg.layer_sizes.push_back(y.cells());
      mcfg.activation = cfg_.surrogate.activation;
      mcfg.dropout_rate = spec.dropout;
      TrainConfig tcfg = cfg_.training;
      tcfg.seed = derive_seed(cfg_.seed, kModelStream + spec.index);
      const TrainResult r = train(x, y, mcfg, tcfg, spec.loss);
      save_model(spec.name.empty() ? dir("models", m) : dir("models", m) / spec.name, r.model,
                 r.loss_history);
    }
  });
}

void Pipeline::ensure_predictions(Method m) {
  ensure_models(m);
  ensure_data(Split::Calibration);
  ensure_data(Split::Validation);
  const fs::path out = dir("predictions", m);
  stage(std::string("predict/") + to_string(m), out, predictions_key(m), [&] {
    std::vector<ModelParams> models;
    for (const auto& spec : model_specs(m, cfg_.surrogate)) {
      models.push_back(load_model(spec.name.empty() ? dir("models", m) : dir("models", m) / spec.name));
    }
    TensorSidecar sc;
    sc.provenance = {{"config_hash", config_hash_}, {"seed", cfg_.seed}, {"method", to_string(m)}};
    for (Split s : {Split::Calibration, Split::Validation}) {
      const Dataset d = read_dataset(data_dir(s));
      const TensorStack x = input_stack(d);
      const Dims dims = d.manifest.output_dims;
      const std::string prefix = to_string(s);
      sc.provenance["split"] = prefix;
      if (m == Method::Aer) {
        write_stack_file(out / (prefix + "_center.cpt"), predict(models[0], x, dims, cfg_.workers).center, sc);
      } else if (m == Method::Std) {
        const std::uint64_t seed = derive_seed(cfg_.seed, kMcStream + split_index(s));
        const StackPrediction p =
            predict_mc(models[0], x, dims, cfg_.surrogate.mc_passes, seed, cfg_.workers);
        write_stack_file(out / (prefix + "_center.cpt"), p.center, sc);
        write_stack_file(out / (prefix + "_sigma.cpt"), p.sigma, sc);
      } else {
        write_stack_file(out / (prefix + "_lower.cpt"), predict(models[0], x, dims, cfg_.workers).center, sc);
        write_stack_file(out / (prefix + "_center.cpt"), predict(models[1], x, dims, cfg_.workers).center, sc);
        write_stack_file(out / (prefix + "_upper.cpt"), predict(models[2], x, dims, cfg_.workers).center, sc);
      }
    }
    // Widths are reported in the model's normalised output units.
    write_json(out / "meta.json", {{"method", to_string(m)},
                                   {"width_scale", 1.0 / models[0].output_scaler.unit()},
                                   {"config_hash", config_hash_},
                                   {"seed", cfg_.seed}});
  });
}

double Pipeline::width_scale(Method m) const {
  return read_json(dir("predictions", m) / "meta.json").at("width_scale").get<double>();
}

SurrogateOutputs Pipeline::load_outputs(Method m, Split s) const {
  const fs::path d = dir("predictions", m);
  const std::string prefix = to_string(s);
  SurrogateOutputs o;
  o.method = m;
  o.center = read_stack_file(d / (prefix + "_center.cpt"));
  if (m == Method::Std) o.sigma = read_stack_file(d / (prefix + "_sigma.cpt"));
  if (m == Method::Cqr) {
    o.lower = read_stack_file(d / (prefix + "_lower.cpt"));
    o.upper = read_stack_file(d / (prefix + "_upper.cpt"));
  }
  return o;
}

void Pipeline::ensure_quantiles(Method m) {
  ensure_predictions(m);
  const fs::path out = dir("quantiles", m);
  stage(std::string("calibrate/") + to_string(m), out, quantiles_key(m), [&] {
    const ScoreTensor scores = score(load_outputs(m, Split::Calibration), load_truth(Split::Calibration));
    const QuantileField q = conformal_quantile(scores, cfg_.alpha, cfg_.workers);
    TensorSidecar sc;
    sc.provenance = {{"config_hash", config_hash_}, {"seed", cfg_.seed}, {"method", to_string(m)},
                     {"alpha", q.alpha},           {"n_cal", q.n_cal}};
    write_tensor_file(out / "qhat.cpt", q.qhat, sc);
  });
}

void Pipeline::ensure_band(Method m) {
  ensure_quantiles(m);
  const fs::path out = dir("bands", m);
  stage(std::string("band/") + to_string(m), out, {{"stage", "bands"}, {"quantiles", quantiles_key(m)}}, [&] {
    const fs::path qpath = dir("quantiles", m) / "qhat.cpt";
    const json prov = read_sidecar(qpath).provenance;
    const QuantileField q{read_tensor_file(qpath), prov.at("alpha").get<double>(),
                          prov.at("n_cal").get<std::size_t>(), m};
    const PredictionBand b = build_band(load_outputs(m, Split::Validation), q, cfg_.workers);
    TensorSidecar sc;
    sc.provenance = {{"config_hash", config_hash_}, {"seed", cfg_.seed}, {"method", to_string(m)},
                     {"alpha", b.alpha},           {"n_cal", b.n_cal}};
    write_stack_file(out / "lower.cpt", b.lower, sc);
    write_stack_file(out / "upper.cpt", b.upper, sc);
  });
}

void Pipeline::ensure_report(Method m) {
  ensure_band(m);
  const json key = {{"stage", "reports"}, {"quantiles", quantiles_key(m)}};
  stage(std::string("validate/") + to_string(m), dir("reports", m), key, [&] {
    const fs::path bdir = dir("bands", m);
    const json prov = read_sidecar(bdir / "lower.cpt").provenance;
    const PredictionBand band{read_stack_file(bdir / "lower.cpt"), read_stack_file(bdir / "upper.cpt"), m,
                              prov.at("alpha").get<double>(), prov.at("n_cal").get<std::size_t>()};
    const TensorStack truth = load_truth(Split::Validation);
    const double scale = width_scale(m);
    json report = report_json(empirical_coverage(band, truth, scale, 0.99, cfg_.workers));
    report["method"] = to_string(m);
    report["calibrated"] = true;
    report["n_cal"] = band.n_cal;
    report["config_hash"] = config_hash_;
    report["seed"] = cfg_.seed;
    write_json(report_json_path(m, true), report);
    if (m != Method::Aer) {
      const PredictionBand raw = uncalibrated_band(load_outputs(m, Split::Validation), cfg_.alpha);
      json u = report_json(empirical_coverage(raw, truth, scale, 0.99, cfg_.workers));
      u.erase("beta");  // no calibration set, no coverage law
      u["method"] = to_string(m);
      u["calibrated"] = false;
      u["config_hash"] = config_hash_;
      u["seed"] = cfg_.seed;
      write_json(report_json_path(m, false), u);
    }
  });
}

void Pipeline::ensure_sweep(Method m) {
  ensure_predictions(m);
  const json key = {{"stage", "sweeps"}, {"predictions", predictions_key(m)}, {"alphas", cfg_.alphas}};
  stage(std::string("sweep/") + to_string(m), dir("sweeps", m), key, [&] {
    const auto rows = validation_sweep(load_outputs(m, Split::Calibration), load_truth(Split::Calibration),
                                       load_outputs(m, Split::Validation), load_truth(Split::Validation),
                                       cfg_.alphas, width_scale(m), cfg_.workers);
    std::ofstream os(sweep_csv(m), std::ios::binary);
    write_sweep_csv(os, rows);
    if (!os) fail(ErrorKind::Io, "cannot write " + sweep_csv(m).string());
  });
}

void Pipeline::ensure_study(Method m) {
  ensure_predictions(m);
  const json key = {{"stage", "study"},
                    {"predictions", predictions_key(m)},
                    {"alphas", cfg_.alphas},
                    {"sizes", cfg_.ncal_sizes}};
  stage(std::string("study-ncal/") + to_string(m), dir("study", m), key, [&] {
    const ScoreTensor pool = score(load_outputs(m, Split::Calibration), load_truth(Split::Calibration));
    const SurrogateOutputs val = load_outputs(m, Split::Validation);
    const TensorStack truth = load_truth(Split::Validation);
    const double scale = width_scale(m);
    for (std::size_t n : cfg_.ncal_sizes) {
      if (n > pool.n_cal()) {
        fail(ErrorKind::Config, "calibration pool of " + std::to_string(pool.n_cal()) +
                                    " is smaller than study size " + std::to_string(n));
      }
      std::vector<std::size_t> idx(pool.n_cal());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      if (n < pool.n_cal()) {
        Rng rng(derive_seed(derive_seed(cfg_.seed, kStudyStream), n));
        rng.shuffle(std::span<std::size_t>(idx));
        idx.resize(n);
        std::sort(idx.begin(), idx.end());
      }
      const ScoreTensor sub{m, pool.scores.select(idx)};
      const auto rows = validation_sweep(sub, val, truth, cfg_.alphas, scale, cfg_.workers);
      std::ofstream os(study_csv(m, n), std::ios::binary);
      write_sweep_csv(os, rows);
      if (!os) fail(ErrorKind::Io, "cannot write " + study_csv(m, n).string());
    }
  });
}

void Pipeline::ensure_plots() {
  json key = {{"stage", "plots"}, {"version", kPlotVersion}, {"methods", json::array()}};
  for (Method m : cfg_.methods) {
    ensure_sweep(m);
    ensure_study(m);
    key["methods"].push_back({{"method", to_string(m)},
                              {"predictions", predictions_key(m)},
                              {"alphas", cfg_.alphas},
                              {"sizes", cfg_.ncal_sizes}});
  }
  const fs::path out = root_ / "plots";
  stage("plot", out, key, [&] {
    for (Method m : cfg_.methods) {
      const std::string name = to_string(m);

      // Coverage against target.
      const auto rows = read_sweep_file(sweep_csv(m));
      {
        std::ofstream os(out / ("coverage_" + name + ".csv"), std::ios::binary);
        write_sweep_csv(os, rows);
      }
      PlotSpec cov{"Coverage, " + name, "target coverage 1 - alpha", "empirical coverage",
                   0.0, 1.0, 0.0, 1.0, true, {}};
      PlotSeries emp{"empirical", {}, {}, color_for(0), true, true, false};
      PlotSeries blo{"beta 99% lo", {}, {}, "#7f7f7f", true, false, true};
      PlotSeries bhi{"beta 99% hi", {}, {}, "#7f7f7f", true, false, true};
      for (const auto& r : rows) {
        emp.x.push_back(r.target);
        emp.y.push_back(r.empirical);
        blo.x.push_back(r.target);
        blo.y.push_back(r.beta_lo);
        bhi.x.push_back(r.target);
        bhi.y.push_back(r.beta_hi);
      }
      cov.series = {emp, blo, bhi};
      write_text(out / ("coverage_" + name + ".svg"), render_svg(cov));

      // Band slice through the final output frame of validation sample 0.
      const std::array<std::size_t, 1> first{0};
      const SurrogateOutputs val = select_outputs(load_outputs(m, Split::Validation), first);
      const TensorStack truth = load_truth(Split::Validation).select(first);
      const ScoreTensor scores = score(load_outputs(m, Split::Calibration), load_truth(Split::Calibration));
      const Dims d = truth.dims();
      const bool along_y = d[2] > 1;
      const std::size_t len = along_y ? d[2] : d[1];
      const std::size_t fixed_x = along_y ? d[1] / 2 : 0;
      auto cell = [&](std::size_t i) {
        const std::size_t x = along_y ? fixed_x : i, y = along_y ? i : 0;
        return (((d[0] - 1) * d[1] + x) * d[2] + y) * d[3];
      };
      const std::vector<double> coords = slice_coords(cfg_.setup, len);
      std::vector<PredictionBand> bands;
      for (double a : kSliceAlphas) bands.push_back(build_band(val, conformal_quantile(scores, a, cfg_.workers)));
      std::ostringstream csv;
      csv << "coord,truth,center";
      for (double a : kSliceAlphas) csv << ",lower_" << format_double(a) << ",upper_" << format_double(a);
      csv << "\n";
      PlotSpec slice{"Band slice, " + name + (along_y ? " (along y, final frame)" : " (final frame)"),
                     along_y ? "y" : "x", "u", 0.0, 0.0, 0.0, 0.0, false, {}};
      PlotSeries tr{"truth", {}, {}, "black", true, false, false};
      PlotSeries ce{"prediction", {}, {}, color_for(0), true, false, false};
      std::vector<PlotSeries> edges;
      for (std::size_t b = 0; b < bands.size(); ++b) {
        const std::string label = "alpha " + format_double(kSliceAlphas[b]);
        edges.push_back({label, {}, {}, color_for(b + 1), true, false, true});
        edges.push_back({"", {}, {}, color_for(b + 1), true, false, true});
      }
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t c = cell(i);
        const double x = coords[i];
        csv << format_double(x) << ',' << format_double(truth.at(0, c)) << ','
            << format_double(val.center.at(0, c));
        tr.x.push_back(x);
        tr.y.push_back(truth.at(0, c));
        ce.x.push_back(x);
        ce.y.push_back(val.center.at(0, c));
        for (std::size_t b = 0; b < bands.size(); ++b) {
          const double lo = bands[b].lower.at(0, c), hi = bands[b].upper.at(0, c);
          csv << ',' << format_double(lo) << ',' << format_double(hi);
          edges[2 * b].x.push_back(x);
          edges[2 * b].y.push_back(lo);
          edges[2 * b + 1].x.push_back(x);
          edges[2 * b + 1].y.push_back(hi);
        }
        csv << "\n";
      }
      write_text(out / ("slice_" + name + ".csv"), csv.str());
      slice.series = {tr, ce};
      slice.series.insert(slice.series.end(), edges.begin(), edges.end());
      write_text(out / ("slice_" + name + ".svg"), render_svg(slice));

      // Calibration-size overlay.
      PlotSpec overlay{"Calibration size, " + name, "target coverage 1 - alpha", "empirical coverage",
                       0.0, 1.0, 0.0, 1.0, true, {}};
      std::ostringstream ocsv;
      ocsv << "n_cal,alpha,target,empirical,beta_lo,beta_hi\n";
      for (std::size_t k = 0; k < cfg_.ncal_sizes.size(); ++k) {
        const std::size_t n = cfg_.ncal_sizes[k];
        PlotSeries s{"n_cal " + std::to_string(n), {}, {}, color_for(k), true, true, false};
        for (const auto& r : read_sweep_file(study_csv(m, n))) {
          ocsv << n << ',' << format_double(r.alpha) << ',' << format_double(r.target) << ','
               << format_double(r.empirical) << ',' << format_double(r.beta_lo) << ','
               << format_double(r.beta_hi) << "\n";
          s.x.push_back(r.target);
          s.y.push_back(r.empirical);
        }
        overlay.series.push_back(std::move(s));
      }
      write_text(out / ("ncal_" + name + ".csv"), ocsv.str());
      write_text(out / ("ncal_" + name + ".svg"), render_svg(overlay));
    }
  });
}

fs::path Pipeline::write_manifest() {
  write_json(root_ / "config.json", canonical_);
  json files = json::object();
  for (const auto& f : list_files(root_, kManifestFile)) files[f] = sha256_file(root_ / f);
  const fs::path path = root_ / kManifestFile;
  write_json(path, {{"experiment", cfg_.experiment},
                    {"config_hash", config_hash_},
                    {"seed", cfg_.seed},
                    {"files", files}});
  return path;
}

RunArtifacts Pipeline::run() {
  RunArtifacts a;
  a.root = root_;
  a.config_hash = config_hash_;
  for (Method m : cfg_.methods) {
    ensure_report(m);
    ensure_sweep(m);
    ensure_study(m);
    a.reports[m] = dir("reports", m);
    a.sweeps[m] = sweep_csv(m);
    for (std::size_t n : cfg_.ncal_sizes) a.studies[m][n] = study_csv(m, n);
  }
  ensure_plots();
  for (const auto& f : list_files(root_ / "plots", kStageFile)) a.plots.push_back(root_ / "plots" / f);
  a.manifest = write_manifest();
  return a;
}

bool sweep_passes(const std::vector<SweepRow>& rows) {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), meets_coverage_bound);
}

std::vector<SweepRow> read_sweep_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot read sweep table " + path.string());
  return read_sweep_csv(is);
}

}  // namespace stcp
