#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ug2/config.hpp"

namespace ug2 {

struct GradCheckGroup {
  std::string name;
  double max_rel_err = 0.0;
  size_t checked = 0;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  std::string aggregator;
  uint64_t seed = 0;
  std::vector<GradCheckGroup> groups;  // one per parameter tensor
};

/// Builds a tiny model (d_in=6, d_hidden=8, K=3, L=2) on a random 12-node
/// graph and compares every parameter's reverse-mode gradient of
/// feat + lambda*spd against central finite differences (h=1e-5).
///
/// Model and inputs derive from the seed; configurations whose activation
/// preinputs sit within 1e-4 of a relu kink are rejected and redrawn
/// (still a pure function of the seed), since finite differences are only
/// meaningful at generic points. inject_bug corrupts one gradient entry
/// after backward — a fixture proving the harness catches bad gradients.
GradCheckReport gradcheck_run(uint64_t seed, AggregatorKind kind,
                              bool inject_bug = false);

}  // namespace ug2
