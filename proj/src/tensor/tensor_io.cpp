#include "stcp/tensor_io.hpp"

#include <cmath>
#include <fstream>

#include "stcp/error.hpp"

namespace stcp {

namespace fs = std::filesystem;

fs::path sidecar_path(const fs::path& tensor_path) {
  fs::path p = tensor_path;
  p.replace_extension(".json");
  return p;
}

std::size_t write_tensor_file(const fs::path& path, const FieldTensor& t,
                              const TensorSidecar& sidecar) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  const std::size_t bytes = write_tensor(t, os);

  nlohmann::json meta;
  meta["format"] = "CPT1";
  meta["dims"] = t.dims();
  meta["axes"] = sidecar.axes;
  meta["samples"] = sidecar.samples;
  meta["provenance"] = sidecar.provenance;
  std::ofstream js(sidecar_path(path), std::ios::trunc);
  if (!js) fail(ErrorKind::Io, "cannot open sidecar for " + path.string());
  js << meta.dump(2) << '\n';
  return bytes;
}

FieldTensor read_tensor_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path.string());
  try {
    return read_tensor(is);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

TensorSidecar read_sidecar(const fs::path& tensor_path) {
  std::ifstream is(sidecar_path(tensor_path));
  if (!is) fail(ErrorKind::Io, "missing sidecar for " + tensor_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, sidecar_path(tensor_path).string() + ": " + e.what());
  }
  TensorSidecar s;
  s.axes = meta.at("axes").get<std::array<std::string, 4>>();
  s.samples = meta.value("samples", std::size_t{1});
  s.provenance = meta.value("provenance", nlohmann::json::object());
  return s;
}

void write_stack_file(const fs::path& path, const TensorStack& stack, TensorSidecar sidecar) {
  bool any_inf = false;
  for (double v : stack.values()) any_inf = any_inf || std::isinf(v);
  sidecar.samples = stack.count();
  sidecar.axes[0] = "sample*t";
  write_tensor_file(path, stack.flatten(any_inf ? Finiteness::AllowInfinite : Finiteness::Required),
                    sidecar);
}

TensorStack read_stack_file(const fs::path& path) {
  const TensorSidecar meta = read_sidecar(path);
  return TensorStack::unflatten(read_tensor_file(path), meta.samples);
}

}  // namespace stcp
