#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stoneage/topology.hpp"

namespace stoneage {

/// One monitor hit: which invariant, at which step, on which nodes.
struct Violation {
  std::string monitor;
  std::uint64_t step = 0;
  std::vector<NodeId> nodes;
  std::string detail;

  bool operator==(const Violation&) const = default;
};

using ViolationLog = std::vector<Violation>;

}  // namespace stoneage
