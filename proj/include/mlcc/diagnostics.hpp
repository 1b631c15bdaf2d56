#pragma once
// Finite-difference verification of the full training graph, model kind by
// model kind, at sizes small enough to probe every coordinate.

#include <string>
#include <vector>

#include "mlcc/model.hpp"

namespace mlcc {

struct GradReport {
  std::string model;  // which built-in tiny config
  std::string param;  // tensor name within it
  GradCheckResult result;
};

// Central-difference checks of d(loss)/d(param) for every parameter of a
// tiny model of each kind: dnn, mlcc with and without the refiner,
// mc_mlcc at S in {1,2,4}, and the inner-product variant.
std::vector<GradReport> gradcheck_suite(double eps = 1e-5);

bool gradcheck_passes(const std::vector<GradReport>& reports,
                      double tolerance = 1e-4);

}  // namespace mlcc
