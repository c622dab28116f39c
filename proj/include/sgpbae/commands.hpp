#pragma once

#include <string>
#include <vector>

#include "sgpbae/checkpoint.hpp"
#include "sgpbae/config.hpp"
#include "sgpbae/diagnostics.hpp"

namespace sgpbae {

// Exit codes shared by every subcommand.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct TrainOutcome {
  std::vector<std::string> checkpoint_paths;
  std::string report_path;
};

// Trains `config.chains` independent chains (parallel up to the
// SGPBAE_THREADS cap) and writes one checkpoint per chain plus a key=value
// report. Chain k derives its seed from the base seed.
TrainOutcome run_train(const RunConfig& config, const Dataset& data,
                       const std::string& out_path);

// Predicted frames and per-pixel epistemic variance at new auxiliary inputs.
void run_generate(const std::string& checkpoint_path,
                  const Eigen::Ref<const RowMat>& x_star, int group,
                  std::uint64_t seed, const std::string& out_csv);

struct ImputeOutcome {
  bool any_missing = true;
  std::string filled_csv;
  std::string report;  // empty when no truth was supplied
};

ImputeOutcome run_impute(const std::string& checkpoint_path,
                         const Dataset& data, const Dataset* truth,
                         std::uint64_t seed, const std::string& out_csv);

struct DiagnoseOutcome {
  double median_rhat = 0.0;
  std::string trace_csv;
  std::string report;
};

// Predictive-posterior traces across >= 2 checkpointed chains at probe
// inputs drawn from the dataset, followed by the scale-reduction statistic.
DiagnoseOutcome run_diagnose(const std::vector<std::string>& checkpoint_paths,
                             const Dataset& data, Eigen::Index max_dims,
                             const std::string& out_prefix);

int thread_cap();  // SGPBAE_THREADS, defaulting to the hardware count

}  // namespace sgpbae
