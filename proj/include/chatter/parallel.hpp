#pragma once

#include <cstddef>

namespace chatter {

/// Selects the OpenMP kernel or the serial reference loop for batch operations.
enum class Exec { serial, parallel };

/// Number of OpenMP threads used by Exec::parallel kernels; 0 keeps the runtime default.
void set_thread_count(int n);
int thread_count();

}  // namespace chatter
