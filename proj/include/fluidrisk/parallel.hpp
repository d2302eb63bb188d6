#pragma once

namespace fluidrisk {

// serial: plain loops and direct sums, kept as the reference for tests.
// parallel: OpenMP-parallel loops and FFT-based level convolutions.
enum class Exec { serial, parallel };

void set_threads(int n);
int thread_count();

}  // namespace fluidrisk
