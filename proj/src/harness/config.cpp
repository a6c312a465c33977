#include "stcp/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "stcp/error.hpp"
#include "stcp/hash.hpp"

namespace stcp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& msg) {
  fail(ErrorKind::Config, "config field '" + field + "': " + msg);
}

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) field_error(where.empty() ? "<root>" : where, "expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) field_error(where.empty() ? key : where + "." + key, "unknown key");
  }
}

template <typename T>
T get(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    field_error(field, "wrong type (" + std::string(j.type_name()) + ")");
  }
}

template <typename T>
void read_if(const json& j, const char* key, const std::string& where, T& out) {
  if (j.contains(key)) out = get<T>(j.at(key), where.empty() ? key : where + "." + key);
}

Activation activation_from(const std::string& s, const std::string& field) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "gelu") return Activation::Gelu;
  field_error(field, "expected tanh or gelu");
}

Loss::Kind loss_from(const std::string& s, const std::string& field) {
  if (s == "mse") return Loss::Kind::Mse;
  if (s == "l1") return Loss::Kind::L1;
  field_error(field, "expected mse or l1");
}

ParameterSpec spec_from(const json& j, const std::string& where) {
  reject_unknown(j, where, {"name", "lo", "hi", "kind"});
  ParameterSpec s;
  if (!j.contains("name") || !j.contains("lo") || !j.contains("hi")) {
    field_error(where, "requires name, lo and hi");
  }
  s.name = get<std::string>(j.at("name"), where + ".name");
  s.lo = get<double>(j.at("lo"), where + ".lo");
  s.hi = get<double>(j.at("hi"), where + ".hi");
  if (j.contains("kind")) {
    const auto k = get<std::string>(j.at("kind"), where + ".kind");
    if (k == "continuous") {
      s.kind = ParameterKind::Continuous;
    } else if (k == "integer") {
      s.kind = ParameterKind::DiscreteInteger;
    } else {
      field_error(where + ".kind", "expected continuous or integer");
    }
  }
  return s;
}

json spec_json(const ParameterSpec& s) {
  return {{"name", s.name},
          {"lo", s.lo},
          {"hi", s.hi},
          {"kind", s.kind == ParameterKind::Continuous ? "continuous" : "integer"}};
}

void read_regime(const json& j, const std::string& where, RegimeConfig& r) {
  reject_unknown(j, where, {"n", "params", "fixed"});
  read_if(j, "n", where, r.n);
  if (j.contains("params")) {
    const json& p = j.at("params");
    if (!p.is_array()) field_error(where + ".params", "expected an array");
    r.params.clear();
    for (std::size_t i = 0; i < p.size(); ++i) {
      r.params.push_back(spec_from(p[i], where + ".params[" + std::to_string(i) + "]"));
    }
  }
  read_if(j, "fixed", where, r.fixed);
}

json regime_json(const RegimeConfig& r) {
  json params = json::array();
  for (const auto& s : r.params) params.push_back(spec_json(s));
  return {{"n", r.n}, {"params", params}, {"fixed", r.fixed}};
}

void read_solver(const json& j, SolverSetup& setup) {
  const std::string w = "solver";
  switch (setup.kind) {
    case SolverKind::Poisson:
      reject_unknown(j, w, {"n_grid"});
      read_if(j, "n_grid", w, setup.poisson.n_grid);
      break;
    case SolverKind::ConvDiff: {
      reject_unknown(j, w, {"n_grid", "length", "n_steps", "dt", "stride", "diffusion_floor",
                            "constant_diffusion"});
      auto& c = setup.convdiff;
      read_if(j, "n_grid", w, c.n_grid);
      read_if(j, "length", w, c.length);
      read_if(j, "n_steps", w, c.n_steps);
      read_if(j, "dt", w, c.dt);
      read_if(j, "stride", w, c.stride);
      read_if(j, "diffusion_floor", w, c.diffusion_floor);
      if (j.contains("constant_diffusion")) {
        c.constant_diffusion = get<double>(j.at("constant_diffusion"), w + ".constant_diffusion");
      }
      break;
    }
    case SolverKind::Wave:
      reject_unknown(j, w, {"n_grid", "n_steps", "dt"});
      read_if(j, "n_grid", w, setup.wave.n_grid);
      read_if(j, "n_steps", w, setup.wave.n_steps);
      read_if(j, "dt", w, setup.wave.dt);
      break;
  }
}

json solver_json(const SolverSetup& setup) {
  switch (setup.kind) {
    case SolverKind::Poisson:
      return {{"n_grid", setup.poisson.n_grid}};
    case SolverKind::ConvDiff: {
      const auto& c = setup.convdiff;
      json j = {{"n_grid", c.n_grid}, {"length", c.length},
                {"n_steps", c.n_steps}, {"dt", c.dt},
                {"stride", c.stride}, {"diffusion_floor", c.diffusion_floor}};
      if (c.constant_diffusion) j["constant_diffusion"] = *c.constant_diffusion;
      return j;
    }
    case SolverKind::Wave:
      return {{"n_grid", setup.wave.n_grid}, {"n_steps", setup.wave.n_steps}, {"dt", setup.wave.dt}};
  }
  return {};
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

void check_regime(const RegimeConfig& r, const std::string& name, SolverKind kind) {
  if (r.n == 0) field_error(name + ".n", "must be >= 1");
  std::set<std::string> seen;
  const auto known = solver_parameters(kind);
  for (const auto& s : r.params) {
    if (!seen.insert(s.name).second) field_error(name + ".params", "duplicate parameter '" + s.name + "'");
    try {
      validate(s);
    } catch (const Error& e) {
      field_error(name + ".params", e.what());
    }
  }
  for (const auto& [key, v] : r.fixed) {
    if (seen.count(key)) field_error(name + ".fixed", "'" + key + "' is also sampled");
    seen.insert(key);
  }
  for (const auto& p : known) {
    if (!seen.count(p)) field_error(name, "solver parameter '" + p + "' is neither sampled nor fixed");
  }
  for (const auto& s : seen) {
    if (std::find(known.begin(), known.end(), s) == known.end()) {
      field_error(name, "'" + s + "' is not a " + std::string(to_string(kind)) + " parameter");
    }
  }
}

}  // namespace

const char* to_string(Loss::Kind kind) {
  switch (kind) {
    case Loss::Kind::Mse:
      return "mse";
    case Loss::Kind::L1:
      return "l1";
    case Loss::Kind::Pinball:
      return "pinball";
    case Loss::Kind::GaussianNll:
      return "gaussian_nll";
  }
  return "?";
}

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  c.alphas = alpha_grid(0.05, 0.95, 0.05);
  c.training.epochs = 300;
  c.training.batch_size = 50;
  if (experiment == "poisson") {
    c.setup.kind = SolverKind::Poisson;
    c.window = {1, 1};
    const std::vector<ParameterSpec> rho{{"rho", 0.0, 4.0}};
    c.train = {2000, rho, {}};
    c.calibration = {1000, rho, {}};
    c.validation = {1000, rho, {}};
    c.methods = {Method::Aer, Method::Std, Method::Cqr};
    c.surrogate.hidden = {64, 64, 64};
    c.surrogate.aer_loss = Loss::Kind::L1;
    c.ncal_sizes = {250, 500, 750, 1000};
  } else if (experiment == "convdiff") {
    c.setup.kind = SolverKind::ConvDiff;
    c.window = {10, 10};
    const ParameterSpec mu{"mu", 1.0, 8.0}, sigma2{"sigma2", 0.25, 0.75};
    c.train = {500, {{"k", 1.0, 2.0}, {"c", 0.1, 0.5}, mu, sigma2}, {}};
    const std::vector<ParameterSpec> shifted{{"k", 2.0, 4.0}, {"c", 0.5, 1.0}, mu, sigma2};
    c.calibration = {1000, shifted, {}};
    c.validation = {1000, shifted, {}};
    c.methods = {Method::Aer, Method::Std, Method::Cqr};
    c.surrogate.hidden = {64, 64};
    c.surrogate.aer_loss = Loss::Kind::Mse;
    c.training.epochs = 500;
    c.ncal_sizes = {1000};
  } else if (experiment == "wave") {
    c.setup.kind = SolverKind::Wave;
    c.setup.wave.n_grid = 17;
    c.setup.wave.n_steps = 20;
    c.window = {10, 10};
    const std::vector<ParameterSpec> ic{
        {"amplitude", 10.0, 50.0}, {"x_pos", 0.1, 0.5}, {"y_pos", 0.1, 0.5}};
    c.train = {200, ic, {{"c", 1.0}}};
    c.calibration = {500, ic, {{"c", 0.5}}};
    c.validation = {500, ic, {{"c", 0.5}}};
    c.methods = {Method::Aer, Method::Std};
    c.surrogate.hidden = {64};
    c.surrogate.aer_loss = Loss::Kind::Mse;
    c.training.epochs = 200;
    c.training.batch_size = 20;
    c.ncal_sizes = {500};
  } else {
    fail(ErrorKind::Config, "config field 'experiment': expected poisson, convdiff or wave, got '" +
                                experiment + "'");
  }
  return c;
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j, "", {"experiment", "seed", "output_dir", "solver", "window", "train",
                         "calibration", "validation", "methods", "surrogate", "training",
                         "alpha", "alphas", "ncal_sizes", "workers"});
  if (!j.contains("experiment")) field_error("experiment", "required");
  ExperimentConfig c = default_config(get<std::string>(j.at("experiment"), "experiment"));
  read_if(j, "seed", "", c.seed);
  if (j.contains("output_dir")) c.output_dir = get<std::string>(j.at("output_dir"), "output_dir");
  if (j.contains("solver")) read_solver(j.at("solver"), c.setup);
  if (j.contains("window")) {
    reject_unknown(j.at("window"), "window", {"t_in", "t_out"});
    read_if(j.at("window"), "t_in", "window", c.window.t_in);
    read_if(j.at("window"), "t_out", "window", c.window.t_out);
  }
  if (j.contains("train")) read_regime(j.at("train"), "train", c.train);
  if (j.contains("calibration")) read_regime(j.at("calibration"), "calibration", c.calibration);
  if (j.contains("validation")) read_regime(j.at("validation"), "validation", c.validation);
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : get<std::vector<std::string>>(j.at("methods"), "methods")) {
      try {
        c.methods.push_back(method_from_string(m));
      } catch (const Error& e) {
        field_error("methods", e.what());
      }
    }
  }
  if (j.contains("surrogate")) {
    const json& s = j.at("surrogate");
    const std::string w = "surrogate";
    reject_unknown(s, w, {"hidden", "activation", "dropout", "mc_passes", "cqr_quantiles",
                          "aer_loss", "std_loss"});
    read_if(s, "hidden", w, c.surrogate.hidden);
    if (s.contains("activation")) {
      c.surrogate.activation =
          activation_from(get<std::string>(s.at("activation"), w + ".activation"), w + ".activation");
    }
    read_if(s, "dropout", w, c.surrogate.dropout);
    read_if(s, "mc_passes", w, c.surrogate.mc_passes);
    if (s.contains("cqr_quantiles")) {
      const auto q = get<std::vector<double>>(s.at("cqr_quantiles"), w + ".cqr_quantiles");
      if (q.size() != 3) field_error(w + ".cqr_quantiles", "expected [lo, mid, hi]");
      c.surrogate.cqr_lo = q[0];
      c.surrogate.cqr_mid = q[1];
      c.surrogate.cqr_hi = q[2];
    }
    if (s.contains("aer_loss")) {
      c.surrogate.aer_loss = loss_from(get<std::string>(s.at("aer_loss"), w + ".aer_loss"), w + ".aer_loss");
    }
    if (s.contains("std_loss")) {
      c.surrogate.std_loss = loss_from(get<std::string>(s.at("std_loss"), w + ".std_loss"), w + ".std_loss");
    }
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    const std::string w = "training";
    reject_unknown(t, w, {"epochs", "batch_size", "learning_rate", "decay_every", "decay_factor"});
    read_if(t, "epochs", w, c.training.epochs);
    read_if(t, "batch_size", w, c.training.batch_size);
    read_if(t, "learning_rate", w, c.training.learning_rate);
    read_if(t, "decay_every", w, c.training.decay_every);
    read_if(t, "decay_factor", w, c.training.decay_factor);
  }
  read_if(j, "alpha", "", c.alpha);
  if (j.contains("alphas")) {
    const json& a = j.at("alphas");
    if (a.is_array()) {
      c.alphas = get<std::vector<double>>(a, "alphas");
    } else {
      reject_unknown(a, "alphas", {"lo", "hi", "step"});
      if (!a.contains("lo") || !a.contains("hi") || !a.contains("step")) {
        field_error("alphas", "requires lo, hi and step");
      }
      try {
        c.alphas = alpha_grid(get<double>(a.at("lo"), "alphas.lo"), get<double>(a.at("hi"), "alphas.hi"),
                              get<double>(a.at("step"), "alphas.step"));
      } catch (const Error& e) {
        field_error("alphas", e.what());
      }
    }
  }
  read_if(j, "ncal_sizes", "", c.ncal_sizes);
  read_if(j, "workers", "", c.workers);
  validate(c);
  return c;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot read config " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, path.string() + ":" + std::to_string(line_of(text, e.byte)) +
                                ": JSON syntax error: " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

void validate(const ExperimentConfig& c) {
  switch (c.setup.kind) {
    case SolverKind::Poisson:
      validate(c.setup.poisson);
      break;
    case SolverKind::ConvDiff: {
      ConvDiffConfig probe = c.setup.convdiff;
      probe.k = 1.0;  // D <= 1 whatever k is
      validate(probe);
      break;
    }
    case SolverKind::Wave: {
      WaveConfig probe = c.setup.wave;
      // CFL at the fastest fixed speed of any regime.
      for (const RegimeConfig* r : {&c.train, &c.calibration, &c.validation}) {
        const auto it = r->fixed.find("c");
        if (it != r->fixed.end()) probe.c = std::max(probe.c, std::fabs(it->second));
        for (const auto& s : r->params) {
          if (s.name == "c") probe.c = std::max({probe.c, std::fabs(s.lo), std::fabs(s.hi)});
        }
      }
      validate(probe);
      break;
    }
  }
  if (c.window.t_in == 0 || c.window.t_out == 0) field_error("window", "lengths must be >= 1");
  check_regime(c.train, "train", c.setup.kind);
  check_regime(c.calibration, "calibration", c.setup.kind);
  check_regime(c.validation, "validation", c.setup.kind);
  if (c.methods.empty()) field_error("methods", "at least one method required");
  if (std::set<Method>(c.methods.begin(), c.methods.end()).size() != c.methods.size()) {
    field_error("methods", "duplicate method");
  }
  if (c.surrogate.hidden.empty()) field_error("surrogate.hidden", "at least one hidden layer");
  if (!(c.surrogate.dropout > 0.0 && c.surrogate.dropout < 1.0)) {
    field_error("surrogate.dropout", "must lie in (0, 1) for MC dropout");
  }
  if (c.surrogate.mc_passes < 2) field_error("surrogate.mc_passes", "must be >= 2");
  if (!(c.surrogate.cqr_lo > 0 && c.surrogate.cqr_lo < c.surrogate.cqr_mid &&
        c.surrogate.cqr_mid < c.surrogate.cqr_hi && c.surrogate.cqr_hi < 1)) {
    field_error("surrogate.cqr_quantiles", "need 0 < lo < mid < hi < 1");
  }
  try {
    validate(c.training);
  } catch (const Error& e) {
    field_error("training", e.what());
  }
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) field_error("alpha", "must lie in (0, 1)");
  try {
    validate_alpha_grid(c.alphas);
  } catch (const Error& e) {
    field_error("alphas", e.what());
  }
  for (std::size_t n : c.ncal_sizes) {
    if (n == 0 || n > c.calibration.n) {
      field_error("ncal_sizes", "sizes must lie in [1, calibration.n]");
    }
  }
  if (c.workers == 0) field_error("workers", "must be >= 1");
}

json canonical_json(const ExperimentConfig& c) {
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.emplace_back(to_string(m));
  return {{"experiment", c.experiment},
          {"seed", c.seed},
          {"solver", solver_json(c.setup)},
          {"window", {{"t_in", c.window.t_in}, {"t_out", c.window.t_out}}},
          {"train", regime_json(c.train)},
          {"calibration", regime_json(c.calibration)},
          {"validation", regime_json(c.validation)},
          {"methods", methods},
          {"surrogate",
           {{"hidden", c.surrogate.hidden},
            {"activation", c.surrogate.activation == Activation::Tanh ? "tanh" : "gelu"},
            {"dropout", c.surrogate.dropout},
            {"mc_passes", c.surrogate.mc_passes},
            {"cqr_quantiles", {c.surrogate.cqr_lo, c.surrogate.cqr_mid, c.surrogate.cqr_hi}},
            {"aer_loss", to_string(c.surrogate.aer_loss)},
            {"std_loss", to_string(c.surrogate.std_loss)}}},
          {"training",
           {{"epochs", c.training.epochs},
            {"batch_size", c.training.batch_size},
            {"learning_rate", c.training.learning_rate},
            {"decay_every", c.training.decay_every},
            {"decay_factor", c.training.decay_factor}}},
          {"alpha", c.alpha},
          {"alphas", c.alphas},
          {"ncal_sizes", c.ncal_sizes}};
}

std::string config_hash(const ExperimentConfig& cfg) { return json_hash(canonical_json(cfg)); }

}  // namespace stcp
