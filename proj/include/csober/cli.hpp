#pragma once

namespace csober {

/// Entry point of the benchmark harness; returns the process exit code
/// (0 success, 2 configuration error, 3 numerical failure).
int cli_main(int argc, const char* const* argv);

}  // namespace csober
