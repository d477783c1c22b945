// A measurement set is the discretized observation operator for one
// coefficient: L stacked measurement arrays, one per boundary input, with the
// inputs optionally retained for provenance.
#pragma once

#include <string>
#include <vector>

#include "nio/common.hpp"

namespace nio {

enum class MeasKind { dtn_elliptic, dtn_helmholtz, albedo, str };

inline const char* meas_kind_name(MeasKind k) {
  switch (k) {
    case MeasKind::dtn_elliptic: return "dtn-elliptic";
    case MeasKind::dtn_helmholtz: return "dtn-helmholtz";
    case MeasKind::albedo: return "albedo";
    case MeasKind::str: return "str";
  }
  return "?";
}

struct MeasurementSet {
  MeasKind kind = MeasKind::dtn_elliptic;
  std::vector<std::vector<double>> psi;     // L entries, each flattened
  std::vector<std::vector<double>> inputs;  // optional: the paired g_l / inflow

  void validate() const {
    if (psi.empty()) throw ShapeError("measurement set has no experiments");
    for (std::size_t l = 0; l < psi.size(); ++l) {
      if (psi[l].size() != psi[0].size())
        throw ShapeError(msg("measurement ", l, " has ", psi[l].size(), " values, expected ",
                             psi[0].size()));
      for (double v : psi[l])
        if (!finite(v)) throw NumericError(msg("non-finite measurement in experiment ", l));
    }
    if (!inputs.empty() && inputs.size() != psi.size())
      throw ShapeError("inputs, when kept, must pair one-to-one with measurements");
  }
};

}  // namespace nio
