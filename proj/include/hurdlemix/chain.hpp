#pragma once

#include <atomic>
#include <functional>

#include "hurdlemix/trace.hpp"

namespace hurdlemix {

// Hooks shared by both samplers' run_chain. The sink sees every kept record as
// soon as it is produced; when `stop` becomes true the chain returns the
// records kept so far.
struct RunControl {
  std::function<void(const TraceRecord&)> sink;
  const std::atomic<bool>* stop = nullptr;
  bool keep_records = true;
};

}  // namespace hurdlemix
