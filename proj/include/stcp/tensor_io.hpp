#pragma once

#include <array>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "stcp/tensor.hpp"

namespace stcp {

/// Contents of the `<name>.json` sidecar written next to every `<name>.cpt`.
struct TensorSidecar {
  std::array<std::string, 4> axes{"t", "x", "y", "var"};
  std::size_t samples = 1;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Writes `<path>` (CPT1) and `<path minus .cpt>.json`. Returns payload bytes.
std::size_t write_tensor_file(const std::filesystem::path& path, const FieldTensor& t,
                              const TensorSidecar& sidecar = {});
[[nodiscard]] FieldTensor read_tensor_file(const std::filesystem::path& path);
[[nodiscard]] TensorSidecar read_sidecar(const std::filesystem::path& tensor_path);

void write_stack_file(const std::filesystem::path& path, const TensorStack& stack,
                      TensorSidecar sidecar = {});
[[nodiscard]] TensorStack read_stack_file(const std::filesystem::path& path);

[[nodiscard]] std::filesystem::path sidecar_path(const std::filesystem::path& tensor_path);

}  // namespace stcp
