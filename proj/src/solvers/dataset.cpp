#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "stcp/error.hpp"
#include "stcp/hash.hpp"
#include "stcp/parallel.hpp"
#include "stcp/solvers.hpp"
#include "stcp/tensor_io.hpp"

namespace stcp {

namespace fs = std::filesystem;

namespace {

std::size_t trajectory_frames(const SolverSetup& setup) {
  switch (setup.kind) {
    case SolverKind::Poisson: return 2;
    case SolverKind::ConvDiff: return setup.convdiff.n_steps / std::max<std::size_t>(setup.convdiff.stride, 1);
    case SolverKind::Wave: return setup.wave.n_steps;
  }
  return 0;
}

double param(const std::map<std::string, double>& p, const std::string& name) {
  const auto it = p.find(name);
  if (it == p.end()) fail(ErrorKind::Config, "missing solver parameter '" + name + "'");
  return it->second;
}

nlohmann::json setup_json(const SolverSetup& setup) {
  nlohmann::json j;
  j["kind"] = to_string(setup.kind);
  switch (setup.kind) {
    case SolverKind::Poisson:
      j["n_grid"] = setup.poisson.n_grid;
      break;
    case SolverKind::ConvDiff: {
      const auto& c = setup.convdiff;
      j["n_grid"] = c.n_grid;
      j["length"] = c.length;
      j["n_steps"] = c.n_steps;
      j["dt"] = c.dt;
      j["stride"] = c.stride;
      j["diffusion_floor"] = c.diffusion_floor;
      if (c.constant_diffusion) j["constant_diffusion"] = *c.constant_diffusion;
      break;
    }
    case SolverKind::Wave:
      j["n_grid"] = setup.wave.n_grid;
      j["n_steps"] = setup.wave.n_steps;
      j["dt"] = setup.wave.dt;
      break;
  }
  return j;
}

void check_names(const DesignMatrix& design, SolverKind kind,
                 const std::map<std::string, double>& fixed) {
  const auto names = solver_parameters(kind);
  const std::set<std::string> known(names.begin(), names.end());
  std::set<std::string> provided;
  for (const auto& spec : design.specs()) {
    if (!known.count(spec.name)) {
      fail(ErrorKind::Config, std::string("design column '") + spec.name +
                                  "' is not a parameter of the " + to_string(kind) + " solver");
    }
    provided.insert(spec.name);
  }
  for (const auto& [name, value] : fixed) {
    if (!known.count(name)) {
      fail(ErrorKind::Config, std::string("fixed parameter '") + name +
                                  "' is not a parameter of the " + to_string(kind) + " solver");
    }
    if (!provided.insert(name).second) {
      fail(ErrorKind::Config, "parameter '" + name + "' is both sampled and fixed");
    }
  }
  for (const auto& name : names) {
    if (!provided.count(name)) {
      fail(ErrorKind::Config, "solver parameter '" + name + "' is neither sampled nor fixed");
    }
  }
}

}  // namespace

const char* to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::Poisson: return "poisson";
    case SolverKind::ConvDiff: return "convdiff";
    case SolverKind::Wave: return "wave";
  }
  return "?";
}

SolverKind solver_kind_from_string(const std::string& name) {
  if (name == "poisson") return SolverKind::Poisson;
  if (name == "convdiff") return SolverKind::ConvDiff;
  if (name == "wave") return SolverKind::Wave;
  fail(ErrorKind::Config, "unknown experiment/solver '" + name + "'");
}

std::vector<std::string> solver_parameters(SolverKind kind) {
  switch (kind) {
    case SolverKind::Poisson: return {"rho"};
    case SolverKind::ConvDiff: return {"k", "c", "mu", "sigma2"};
    case SolverKind::Wave: return {"amplitude", "x_pos", "y_pos", "c"};
  }
  return {};
}

FieldTensor simulate(const SolverSetup& setup, const std::map<std::string, double>& params) {
  switch (setup.kind) {
    case SolverKind::Poisson: {
      PoissonConfig cfg = setup.poisson;
      cfg.rho = param(params, "rho");
      const FieldTensor steady = solve_poisson_1d(cfg);
      std::vector<double> frames(2 * cfg.n_grid, cfg.rho);
      std::copy(steady.values().begin(), steady.values().end(), frames.begin() + cfg.n_grid);
      return FieldTensor(Dims{2, cfg.n_grid, 1, 1}, std::move(frames));
    }
    case SolverKind::ConvDiff: {
      ConvDiffConfig cfg = setup.convdiff;
      cfg.k = param(params, "k");
      cfg.c = param(params, "c");
      cfg.mu = param(params, "mu");
      cfg.sigma2 = param(params, "sigma2");
      return solve_convdiff_1d(cfg);
    }
    case SolverKind::Wave: {
      WaveConfig cfg = setup.wave;
      cfg.amplitude = param(params, "amplitude");
      cfg.x_pos = param(params, "x_pos");
      cfg.y_pos = param(params, "y_pos");
      cfg.c = param(params, "c");
      return solve_wave_2d(cfg);
    }
  }
  fail(ErrorKind::Config, "unknown solver");
}

nlohmann::json dataset_identity(const DesignMatrix& design, const SolverSetup& setup,
                                const Window& window,
                                const std::map<std::string, double>& fixed) {
  nlohmann::json j;
  j["solver_version"] = kSolverVersion;
  j["setup"] = setup_json(setup);
  j["window"] = {{"t_in", window.t_in}, {"t_out", window.t_out}};
  j["fixed"] = fixed;
  std::ostringstream csv;
  design.write_csv(csv);
  j["design"] = {{"rows", design.rows()}, {"seed", design.seed()}, {"values_sha256", sha256_hex(csv.str())}};
  return j;
}

Dataset generate_dataset(const DesignMatrix& design, const SolverSetup& setup,
                         const Window& window, const std::map<std::string, double>& fixed,
                         std::uint64_t seed, std::size_t workers) {
  check_names(design, setup.kind, fixed);
  if (window.t_in == 0 || window.t_out == 0) {
    fail(ErrorKind::Config, "window lengths must be >= 1");
  }
  const std::size_t frames = trajectory_frames(setup);
  if (window.t_in + window.t_out > frames) {
    fail(ErrorKind::Config, "window overflow: t_in + t_out = " +
                                std::to_string(window.t_in + window.t_out) + " exceeds " +
                                std::to_string(frames) + " trajectory frames");
  }

  const auto names = solver_parameters(setup.kind);
  Dataset ds;
  ds.specs = design.specs();
  ds.records.resize(design.rows());
  parallel_for(design.rows(), workers, [&](std::size_t r) {
    std::map<std::string, double> p = fixed;
    for (std::size_t c = 0; c < design.cols(); ++c) p[design.specs()[c].name] = design.at(r, c);
    const FieldTensor traj = simulate(setup, p);
    SimulationRecord rec;
    for (const auto& name : names) rec.params.push_back(p.at(name));
    rec.input = slice_frames(traj, 0, window.t_in);
    rec.output = slice_frames(traj, window.t_in, window.t_out);
    ds.records[r] = std::move(rec);
  });

  auto& m = ds.manifest;
  m.solver = to_string(setup.kind);
  m.config_hash = json_hash(dataset_identity(design, setup, window, fixed));
  m.seed = seed;
  m.count = ds.records.size();
  m.window = window;
  m.parameter_names = names;
  m.fixed = fixed;
  if (!ds.records.empty()) {
    m.input_dims = ds.records.front().input.dims();
    m.output_dims = ds.records.front().output.dims();
  }
  return ds;
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  const auto& m = dataset.manifest;
  nlohmann::json j;
  j["solver"] = m.solver;
  j["solver_version"] = m.solver_version;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["count"] = m.count;
  j["window"] = {{"t_in", m.window.t_in}, {"t_out", m.window.t_out}};
  j["input_dims"] = m.input_dims;
  j["output_dims"] = m.output_dims;
  j["parameter_names"] = m.parameter_names;
  j["fixed"] = m.fixed;
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : dataset.specs) {
    specs.push_back({{"name", s.name},
                     {"lo", s.lo},
                     {"hi", s.hi},
                     {"kind", s.kind == ParameterKind::Continuous ? "continuous" : "integer"}});
  }
  j["sampled"] = specs;
  std::ofstream(dir / "manifest.json") << j.dump(2) << '\n';

  std::ofstream csv(dir / "params.csv");
  for (std::size_t c = 0; c < m.parameter_names.size(); ++c) {
    csv << (c ? "," : "") << m.parameter_names[c];
  }
  csv << '\n';
  for (const auto& rec : dataset.records) {
    for (std::size_t c = 0; c < rec.params.size(); ++c) {
      csv << (c ? "," : "") << format_double(rec.params[c]);
    }
    csv << '\n';
  }

  TensorSidecar sc;
  sc.provenance = {{"seed", m.seed}, {"config_hash", m.config_hash}};
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    sc.provenance["record"] = i;
    const std::string idx = std::to_string(i);
    write_tensor_file(dir / ("input_" + idx + ".cpt"), dataset.records[i].input, sc);
    write_tensor_file(dir / ("output_" + idx + ".cpt"), dataset.records[i].output, sc);
  }
}

Dataset read_dataset(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) fail(ErrorKind::Io, "missing dataset manifest in " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, (dir / "manifest.json").string() + ": " + e.what());
  }
  Dataset ds;
  auto& m = ds.manifest;
  m.solver = j.at("solver").get<std::string>();
  m.solver_version = j.at("solver_version").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.count = j.at("count").get<std::size_t>();
  m.window = {j.at("window").at("t_in").get<std::size_t>(),
              j.at("window").at("t_out").get<std::size_t>()};
  m.input_dims = j.at("input_dims").get<Dims>();
  m.output_dims = j.at("output_dims").get<Dims>();
  m.parameter_names = j.at("parameter_names").get<std::vector<std::string>>();
  m.fixed = j.at("fixed").get<std::map<std::string, double>>();
  for (const auto& s : j.at("sampled")) {
    ds.specs.push_back({s.at("name").get<std::string>(), s.at("lo").get<double>(),
                        s.at("hi").get<double>(),
                        s.at("kind").get<std::string>() == "integer"
                            ? ParameterKind::DiscreteInteger
                            : ParameterKind::Continuous});
  }

  std::ifstream csv(dir / "params.csv");
  std::string line;
  std::getline(csv, line);  // header
  ds.records.resize(m.count);
  for (std::size_t i = 0; i < m.count; ++i) {
    auto& rec = ds.records[i];
    if (!std::getline(csv, line)) fail(ErrorKind::Format, "params.csv shorter than manifest count");
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) rec.params.push_back(std::stod(cell));
    const std::string idx = std::to_string(i);
    rec.input = read_tensor_file(dir / ("input_" + idx + ".cpt"));
    rec.output = read_tensor_file(dir / ("output_" + idx + ".cpt"));
    if (rec.input.dims() != m.input_dims || rec.output.dims() != m.output_dims) {
      fail(ErrorKind::Format, "record " + idx + " dims disagree with manifest");
    }
  }
  return ds;
}

TensorStack input_stack(const Dataset& dataset) {
  std::vector<FieldTensor> t;
  t.reserve(dataset.records.size());
  for (const auto& r : dataset.records) t.push_back(r.input);
  return TensorStack::from_tensors(t);
}

TensorStack output_stack(const Dataset& dataset) {
  std::vector<FieldTensor> t;
  t.reserve(dataset.records.size());
  for (const auto& r : dataset.records) t.push_back(r.output);
  return TensorStack::from_tensors(t);
}

}  // namespace stcp
