#pragma once

#include <filesystem>
#include <string>

#include "patchmil/model.hpp"

namespace patchmil::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("patchmil_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

/// Reference scorer wired by hand so that its logit is
/// (max over the patch of the centered, scaled intensity) + bias: channel 0
/// of every conv stage passes its input through, everything else is zero.
/// Patches holding something brighter than their own mean score high.
inline PatchScorer bright_spot_scorer(float bias = -1.0f) {
  ScorerSpec spec;
  PatchScorer sc = build_scorer(spec);
  auto params = sc.all_parameters();
  for (nn::Parameter* p : params) std::fill(p->value.begin(), p->value.end(), 0.0f);
  // Conv weights are laid out [out][in][3][3]; tap 4 is the center.
  for (std::size_t i = 0; i + 2 < params.size(); i += 2) params[i]->value[4] = 1.0f;
  params[params.size() - 2]->value[0] = 1.0f;
  params.back()->value[0] = bias;
  return sc;
}

}  // namespace patchmil::testing
