#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ddcsp/adam.hpp"
#include "ddcsp/dense.hpp"

namespace ddcsp {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary model snapshot. Layout (little-endian):
//   magic "DDCP" | u32 version = 1
//   u32 len + bytes  model kind  (UTF-8)
//   u32 len + bytes  config      (UTF-8)
//   u32 array count
//   per array: u32 len + bytes name | u8 dtype (0 = f32) | u8 rank
//              rank x u64 dims | raw f32 data, row-major
struct Checkpoint {
  std::string model_kind;
  std::string config;
  std::vector<std::pair<std::string, DenseMatrix<float>>> arrays;

  const DenseMatrix<float>& array(const std::string& name) const {
    for (const auto& [n, a] : arrays)
      if (n == name) return a;
    throw CheckpointError("missing array: " + name);
  }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// ParamStore values only; optimizer state is not persisted.
Checkpoint checkpoint_from_params(const ParamStore<float>& store, const std::string& model_kind,
                                  const std::string& config);
void params_from_checkpoint(const Checkpoint& ckpt, ParamStore<float>& store);

}  // namespace ddcsp
