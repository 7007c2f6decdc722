#pragma once

namespace fbfev {

// Kahan compensated accumulator. The op order below is load-bearing: the
// sequential-coherence and determinism guarantees assume this exact sequence
// (and -ffp-contract=off so no FMA rewrites it).
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
};

}  // namespace fbfev
