#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mmdcal/adam.hpp"
#include "mmdcal/dataset.hpp"
#include "mmdcal/errors.hpp"
#include "mmdcal/hnn.hpp"
#include "mmdcal/kernels.hpp"
#include "mmdcal/metrics.hpp"

namespace mmdcal {

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 128;
  /// Stage-2 overrides; unset means the stage-1 value.
  std::optional<double> stage2_weight_decay;
  std::size_t stage2_batch_size = 0;
  std::size_t stage1_epochs = 200;
  std::size_t stage2_epochs = 100;  ///< 0 skips stage 2
  std::size_t patience = 20;        ///< epochs without validation improvement
  std::uint64_t seed = 0;
  KernelMixture kernels;
  EstimatorKind mmd_estimator = EstimatorKind::kBiased;
  /// Stage 2 updates only the log-variance column of the output layer.
  bool variance_head_only = false;
  ConfidenceGrid grid = ConfidenceGrid::standard();

  void validate() const;
};

struct TraceRow {
  int stage = 1;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_nll = 0.0;
  double val_ecpe = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;

  /// Columns stage,epoch,train_loss,val_nll,val_ecpe.
  void save_csv(const std::filesystem::path& path) const;
};

/// Raised when a loss, gradient or update turns non-finite. Carries the trace
/// up to the failing epoch.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, TrainTrace trace)
      : Error(Errc::kDiverged, what), trace_(std::move(trace)) {}
  const TrainTrace& trace() const noexcept { return trace_; }

 private:
  TrainTrace trace_;
};

/// Minibatch NLL with early stopping on validation NLL. The best epoch's
/// parameters are restored on return. Rows are appended to `trace`.
void train_stage1(HnnModel& model, const SplitPart& train, const SplitPart& val, const TrainConfig& config,
                  TrainTrace& trace);

/// Minibatch MMD^2 between targets and reparameterized samples (fresh noise
/// each step), early stopping on validation ECPE with best-epoch restore.
void train_stage2(HnnModel& model, const SplitPart& train, const SplitPart& val, const TrainConfig& config,
                  TrainTrace& trace);

/// Stage 1 then stage 2, once each.
TrainTrace train_two_stage(HnnModel& model, const SplitPart& train, const SplitPart& val, const TrainConfig& config);

/// Mean NLL over the split without recording a tape.
double evaluate_nll(const HnnModel& model, const SplitPart& split);

/// Two-sided ECPE of the model's Gaussians on the split.
double evaluate_ecpe(const HnnModel& model, const SplitPart& split, const ConfidenceGrid& grid);

}  // namespace mmdcal
