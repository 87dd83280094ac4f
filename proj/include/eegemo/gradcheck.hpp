#ifndef EEGEMO_GRADCHECK_HPP
#define EEGEMO_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace eegemo::gradcheck {

constexpr double kTolerance = 1e-4;
constexpr double kStep = 1e-5;

struct Report {
  double max_rel_error = 0.0;
  bool pass = false;
  std::vector<std::pair<std::string, double>> per_block;  // block name -> max rel err
};

// Compares analytic backpropagation-through-time gradients against central
// finite differences on a small 64-bit rig (3 steps, 2 features, hidden
// sizes 4/6/3/3/2, batch 2), dropout active with fixed masks. `corrupt`
// perturbs one analytic gradient entry, as a negative control.
Report run(uint64_t seed, bool corrupt = false);

std::string format_report(const Report& r);

}  // namespace eegemo::gradcheck

#endif
