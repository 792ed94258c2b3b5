#pragma once

#include <string>

#include "csober/optimizer.hpp"

namespace csober {

/// Uniform/pool-uniform batches under the same query accounting and metric
/// conventions as the main loop.
RunOutput baseline_random(const Problem& problem, const LoopConfig& cfg);

/// Constrained Thompson sampling as a full optimiser with surrogate refits
/// each iteration.
RunOutput baseline_cts(const Problem& problem, const LoopConfig& cfg);

enum class Method { kCsober, kRandom, kCts };

RunOutput run_method(const Problem& problem, Method method, const LoopConfig& cfg);

/// Parses "csober", "random" or "cts"; throws ConfigError otherwise.
Method parse_method(const std::string& name);

}  // namespace csober
