#pragma once
// Closed-form parameter and FLOP accounting for every model kind, matching
// the runtime exactly: parameter counts equal the enumerated tensor sizes
// and FLOP counts equal the instrumented op counter. One multiply-accumulate
// is 2 FLOPs, relu/gelu cost 1 FLOP per element, and data movement is free.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mlcc/config.hpp"

namespace mlcc {

struct CostRow {
  std::string component;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;  // forward, at the requested batch size
};

struct CostReport {
  std::vector<CostRow> rows;  // embedding, gc, plc, lc, readout
  std::uint64_t total_params = 0;
  std::uint64_t total_flops = 0;
  std::size_t batch = 1;
  std::string config_echo;  // model summary line

  const CostRow& row(const std::string& component) const;
  // gc + lc: the cost of the interaction module proper.
  std::uint64_t interaction_params() const;
};

CostReport cost_report(const RunConfig& cfg, std::size_t batch = 1);
std::uint64_t param_count(const RunConfig& cfg);
std::uint64_t flop_count(const RunConfig& cfg, std::size_t batch = 1);

enum class SweepAxis { Heads, EmbeddingDim, Channels };

SweepAxis sweep_axis_from_name(const std::string& name);  // H, E, or S

struct SweepRow {
  std::size_t value = 0;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

// Applies each value to a copy of the base config along the axis (E also
// rewrites the first crossing width, which must track it) and reports costs.
std::vector<SweepRow> sweep(SweepAxis axis,
                            const std::vector<std::size_t>& values,
                            const RunConfig& base);

// CSV with header `axis,value,params,flops`.
std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows);

// CSV with header `component,params,flops`, one row per component plus a
// total row.
std::string cost_csv(const CostReport& report);

}  // namespace mlcc
