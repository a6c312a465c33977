#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stcp/config.hpp"
#include "stcp/conformal.hpp"
#include "stcp/solvers.hpp"

namespace stcp {

enum class Split { Train, Calibration, Validation };

[[nodiscard]] const char* to_string(Split s);

/// Whether a stage was recomputed or reused from disk.
struct StageEvent {
  std::string stage;
  std::filesystem::path dir;
  bool ran = false;
};

struct RunArtifacts {
  std::filesystem::path root;
  std::string config_hash;
  std::map<Method, std::filesystem::path> sweeps;
  std::map<Method, std::map<std::size_t, std::filesystem::path>> studies;
  std::map<Method, std::filesystem::path> reports;
  std::vector<std::filesystem::path> plots;
  std::filesystem::path manifest;
};

/// Orchestrates generate -> train -> calibrate -> band -> validate -> sweep
/// -> study -> plot under `<output_dir>/<experiment>-<hash>/`.
///
/// Every stage directory holds a stage.json with the stage key, config hash,
/// seed and the SHA-256 of each file it wrote. A stage whose key matches and
/// whose files are intact is reused; otherwise its directory is cleared and
/// rebuilt. Each ensure_* call first ensures its inputs.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig cfg);

  [[nodiscard]] const ExperimentConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }
  [[nodiscard]] const std::vector<StageEvent>& events() const noexcept { return events_; }

  void ensure_data(Split split);
  void ensure_models(Method m);
  void ensure_predictions(Method m);
  void ensure_quantiles(Method m);
  void ensure_band(Method m);
  void ensure_report(Method m);
  void ensure_sweep(Method m);
  void ensure_study(Method m);
  void ensure_plots();

  /// Runs every stage for every configured method and writes manifest.json.
  RunArtifacts run();

  /// manifest.json: SHA-256 of every file under the run directory.
  std::filesystem::path write_manifest();

  [[nodiscard]] std::filesystem::path dir(const std::string& stage, Method m) const;
  [[nodiscard]] std::filesystem::path data_dir(Split s) const;
  [[nodiscard]] std::filesystem::path sweep_csv(Method m) const;
  [[nodiscard]] std::filesystem::path study_csv(Method m, std::size_t n_cal) const;
  [[nodiscard]] std::filesystem::path report_json_path(Method m, bool calibrated) const;

  /// Loads persisted predictions for a split (calibration or validation).
  [[nodiscard]] SurrogateOutputs load_outputs(Method m, Split s) const;
  [[nodiscard]] TensorStack load_truth(Split s) const;

 private:
  bool stage(const std::string& name, const std::filesystem::path& dir, const nlohmann::json& key,
             const std::function<void()>& produce);

  [[nodiscard]] nlohmann::json data_key(Split s) const;
  [[nodiscard]] nlohmann::json model_key(Method m) const;
  [[nodiscard]] nlohmann::json predictions_key(Method m) const;
  [[nodiscard]] nlohmann::json quantiles_key(Method m) const;
  [[nodiscard]] double width_scale(Method m) const;

  ExperimentConfig cfg_;
  nlohmann::json canonical_;
  std::string config_hash_;
  std::filesystem::path root_;
  std::vector<StageEvent> events_;
  mutable std::map<Split, TensorStack> truth_cache_;
  std::map<std::filesystem::path, std::string> verified_;  // stage dir -> key checked this process
};

/// Every data row of the sweep meets its coverage bound.
[[nodiscard]] bool sweep_passes(const std::vector<SweepRow>& rows);
[[nodiscard]] std::vector<SweepRow> read_sweep_file(const std::filesystem::path& path);

}  // namespace stcp
