#pragma once

#include <functional>
#include <string>

namespace voxbench {

// Fractional milliseconds of simulated time.
using Millis = double;

// One protocol state-machine transition, as written to the JSONL trace.
struct StateChange {
  Millis t = 0;
  std::string endpoint;
  std::string event;
  std::string state_before;
  std::string state_after;
};

using TransitionObserver = std::function<void(const StateChange&)>;

}  // namespace voxbench
