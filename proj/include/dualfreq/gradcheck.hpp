#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualfreq/detector.hpp"

namespace dualfreq {

struct GradcheckRow {
  std::string kernel;
  double max_rel_error = 0;  // worst trial
  Index trials = 0;
  double tolerance = 0;

  bool pass() const { return max_rel_error < tolerance; }
};

// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-10) over all
// differentiable inputs of one trial.
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

// Every differentiable op in f64 on random small shapes, probed through a
// random weighted sum and compared with central differences of step h.
std::vector<GradcheckRow> kernel_gradcheck(std::uint64_t seed, Index trials = 100, double h = 1e-5,
                                           double tolerance = 1e-4);

// Detector parameter gradients on one 1x3x16x16 image under BCE: the f32
// backward pass against f64 central differences at `coords` sampled
// parameter entries.
GradcheckRow detector_gradcheck(std::uint64_t seed, const DetectorConfig& cfg, Index coords = 200,
                                double h = 1e-5, double tolerance = 1e-3);

DetectorConfig gradcheck_detector_config();  // input_size 16, default everything else

std::string format_gradcheck_csv(const std::vector<GradcheckRow>& rows);  // kernel,max_rel_error,trials,tolerance,pass

}  // namespace dualfreq
