#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "qdet/model.hpp"

namespace qdet {

// One JSON config shared by every command:
//   {"model": {"family": "eta_sigmoid", "eta0":.., "eta1":.., "s0":.., "s1":.., "z":..},
//    "prior": {"pi":.., "lambda":..},
//    "penalty": {"kind": "linear"|"exponential", "c":.., "alpha":..}}
// Tabulated models use family "tabulated" with arrays x, mu0, mu1, sigma.
// Unknown fields are rejected with the offending path.
struct Setup {
  DiffusionModel model = DiffusionModel::eta_sigmoid(0.0, 1.0, 1.0, 1.0, 1.0);
  Prior prior;
  PenaltySpec penalty;
};

Setup parse_setup(const std::string& json_text);
Setup load_setup(const std::string& path);

// canonical serialization (sorted keys) and its FNV-1a 64 hash, used by the
// run manifests
std::string canonical_config(const Setup& setup);
std::uint64_t fnv1a64(const std::string& text);

}  // namespace qdet
