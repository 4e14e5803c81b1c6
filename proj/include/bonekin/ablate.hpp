#pragma once

#include <map>
#include <string>
#include <vector>

#include "bonekin/pipeline.hpp"
#include "bonekin/synth.hpp"

namespace bonekin {

struct AblationRow {
  std::string name;
  std::vector<double> mpjpe_per_seed;  // validation MPJPE, mm
  double median_mpjpe = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  // variant-minus-reference validation MPJPE, median over seeds; positive
  // means the reference configuration wins
  std::map<std::string, double> median_delta;
};

// Trains the reference configuration plus the toggled variants
// (consecutive-only length sampling at inference, direct joint regression,
// no length augmentation, no visibility fusion) for every seed on one
// generated dataset, and reports per-variant median MPJPE deltas.
AblationReport run_ablation(const GeneratorConfig& gen, TrainConfig base,
                            const std::vector<uint64_t>& seeds);

std::string ablation_to_json(const AblationReport& report);

}  // namespace bonekin
