#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "widthlab/experiments.hpp"

namespace acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

using CriterionFn = CriterionResult (*)();

// fast criteria
CriterionResult c1_gradient_oracles();
CriterionResult c2_ntk_decomposition();
CriterionResult c11_determinism();

// sweep-backed criteria
CriterionResult c3_lazy_spectral_law();
CriterionResult c4_feature_movement();
CriterionResult c5_fluctuation_scaling();
CriterionResult c6_wider_is_better();
CriterionResult c7_mup_vs_sp_consistency();
CriterionResult c8_spectra_and_eigenfunctions();
CriterionResult c9_representation_convergence();
CriterionResult c10_offline_phenomena();

// Shared artifact root; sweeps are cached here across criteria and reruns by
// config digest.
std::filesystem::path work_root();

widthlab::ExperimentConfig rich_config();
widthlab::ExperimentConfig sp_config();
widthlab::ExperimentConfig lazy_config();
widthlab::ExperimentConfig spectra_init_config();
widthlab::ExperimentConfig after_kernel_config();
widthlab::ExperimentConfig offline_config();
widthlab::ExperimentConfig online_twin_config();

widthlab::SweepResult ensure_sweep(const widthlab::ExperimentConfig& config);

template <typename T>
std::string str(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace acceptance
