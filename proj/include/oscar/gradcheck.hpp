#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "oscar/composition.hpp"
#include "oscar/energy.hpp"

namespace oscar {

struct GradcheckOptions {
  std::vector<Index> dims{2, 4, 8};
  std::vector<Index> span_lengths{1, 2, 5};
  int repeats = 3;  // configurations per (dim, span length)
  int entities = 2;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor in the relative error, so that components whose true
  // gradient is ~0 are compared absolutely at tolerance * floor.
  double floor = 1e-4;
  // Absolute-kind points are resampled while any projected coordinate lies
  // within this distance of its target.
  double kink_margin = 1e-3;
  OutputNonlinearity g = OutputNonlinearity::Tanh;
  std::uint64_t seed = 20190731;
  // Test fixture: negate the analytic projection gradient in one cell.
  std::optional<std::pair<CompositionMethod, EnergyType>> inject_sign_error;
};

struct GradcheckCell {
  CompositionMethod method;
  EnergyType energy;
  std::size_t configs = 0;
  std::size_t components = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
  bool passed() const { return failures == 0 && configs > 0; }
};

double relative_error(double analytic, double numeric, double floor);

// Central finite differences of the full compose -> project -> energy
// pipeline against the analytic backward, for every parameter and input.
GradcheckCell gradcheck_cell(CompositionMethod method, EnergyType energy, const GradcheckOptions& opts);

// All 3 x 3 (method, energy) cells.
std::vector<GradcheckCell> gradcheck_all(const GradcheckOptions& opts);

}  // namespace oscar
