#include "mmdcal/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mmdcal/losses.hpp"
#include "mmdcal/rng.hpp"

namespace mmdcal {
namespace {

// Stage 2 draws from its own stream so a two-stage run shares stage 1
// bit-for-bit with an NLL-only run of the same seed.
constexpr std::uint64_t kStage2Stream = 0x9e3779b97f4a7c15ULL;

void require_nonempty(const SplitPart& part, const char* name) {
  if (part.rows == 0) throw Error(Errc::kEmptySplit, std::string(name) + " split is empty");
}

struct Batch {
  Tensor x;
  std::vector<double> y;
};

Batch gather(const SplitPart& part, std::span<const std::size_t> rows) {
  std::vector<double> x;
  x.reserve(rows.size() * part.cols);
  std::vector<double> y;
  y.reserve(rows.size());
  for (auto r : rows) {
    x.insert(x.end(), part.x.begin() + static_cast<std::ptrdiff_t>(r * part.cols),
             part.x.begin() + static_cast<std::ptrdiff_t>((r + 1) * part.cols));
    y.push_back(part.y[r]);
  }
  return {Tensor::from({rows.size(), part.cols}, std::move(x)), std::move(y)};
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const auto end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A trailing single row joins the previous batch (the unbiased MMD needs pairs).
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

bool finite_params(const HnnModel& model) {
  for (const auto& p : model.parameters())
    for (double v : p.data())
      if (!std::isfinite(v)) return false;
  return true;
}

void mask_variance_head(Adam& adam, const HnnModel& model) {
  const auto params = model.parameters();
  for (std::size_t i = 0; i < 4; ++i) adam.set_mask(i, std::vector<double>(params[i].numel(), 0.0));
  std::vector<double> w3(params[4].numel(), 0.0);
  for (std::size_t r = 0; r < params[4].rows(); ++r) w3[r * 2 + 1] = 1.0;
  adam.set_mask(4, std::move(w3));
  adam.set_mask(5, {0.0, 1.0});
}

// Shared epoch loop: `step_loss` builds one minibatch loss on the tape, and
// `score` returns the validation quantity to minimize.
template <typename StepLoss>
void run_stage(int stage, HnnModel& model, const SplitPart& train, const SplitPart& val, const TrainConfig& config,
               std::size_t epochs, Rng& rng, StepLoss&& step_loss, TrainTrace& trace) {
  AdamConfig adam_config = config.adam;
  std::size_t batch_size = config.batch_size;
  if (stage == 2) {
    if (config.stage2_weight_decay) adam_config.weight_decay = *config.stage2_weight_decay;
    if (config.stage2_batch_size) batch_size = config.stage2_batch_size;
  }
  Adam adam(model.parameters(), adam_config);
  if (stage == 2 && config.variance_head_only) mask_variance_head(adam, model);

  HnnModel best = model.clone();
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    double loss_sum = 0.0;
    try {
      for (const auto& rows : epoch_batches(train.rows, batch_size, rng)) {
        const auto batch = gather(train, rows);
        Tape tape;
        adam.zero_grad();
        const auto loss = step_loss(tape, batch);
        tape.backward(loss);
        adam.step();
        loss_sum += loss.item() * static_cast<double>(rows.size());
      }
    } catch (const Error& e) {
      if (e.code() != Errc::kNonFinite) throw;
      throw DivergedError("stage " + std::to_string(stage) + " epoch " + std::to_string(epoch) + ": " + e.what(),
                          trace);
    }
    if (!finite_params(model)) {
      throw DivergedError("stage " + std::to_string(stage) + " epoch " + std::to_string(epoch) +
                              ": parameters became non-finite",
                          trace);
    }

    TraceRow row;
    row.stage = stage;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(train.rows);
    row.val_nll = evaluate_nll(model, val);
    row.val_ecpe = evaluate_ecpe(model, val, config.grid);
    trace.rows.push_back(row);

    const double score = stage == 1 ? row.val_nll : row.val_ecpe;
    if (score < best_score) {
      best_score = score;
      best.copy_parameters_from(model);
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  if (epochs > 0) model.copy_parameters_from(best);
}

}  // namespace

void TrainConfig::validate() const {
  adam.validate();
  if (batch_size == 0) throw Error(Errc::kConfigError, "batch_size must be positive");
  if (stage1_epochs == 0) throw Error(Errc::kConfigError, "stage1_epochs must be >= 1");
  if (patience == 0) throw Error(Errc::kConfigError, "patience must be >= 1");
  if (stage2_weight_decay && !(*stage2_weight_decay >= 0.0 && std::isfinite(*stage2_weight_decay))) {
    throw Error(Errc::kConfigError, "stage2_weight_decay must be finite and >= 0");
  }
  kernels.validate();
  grid.validate();
}

void TrainTrace::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kFileNotFound, "cannot write " + path.string());
  out << "stage,epoch,train_loss,val_nll,val_ecpe\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%zu,%.17g,%.17g,%.17g\n", r.stage, r.epoch, r.train_loss, r.val_nll,
                  r.val_ecpe);
    out << buf;
  }
}

double evaluate_nll(const HnnModel& model, const SplitPart& split) {
  require_nonempty(split, "evaluation");
  const auto preds = model.predict_distribution(split.x_tensor());
  std::vector<double> mu(preds.size()), s(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    mu[i] = preds[i].mu;
    s[i] = 2.0 * std::log(preds[i].sigma);
  }
  return nll_value(mu, s, split.y);
}

double evaluate_ecpe(const HnnModel& model, const SplitPart& split, const ConfidenceGrid& grid) {
  require_nonempty(split, "evaluation");
  const auto preds = model.predict_distribution(split.x_tensor());
  return ecpe(grid.levels, empirical_coverage(preds, split.y, grid));
}

void train_stage1(HnnModel& model, const SplitPart& train, const SplitPart& val, const TrainConfig& config,
                  TrainTrace& trace) {
  config.validate();
  require_nonempty(train, "training");
  require_nonempty(val, "validation");
  Rng rng(config.seed);
  auto step = [&](Tape& tape, const Batch& batch) {
    const auto out = model.forward(tape, batch.x);
    return nll_loss(tape, out.mu, out.s, batch.y);
  };
  run_stage(1, model, train, val, config, config.stage1_epochs, rng, step, trace);
}

void train_stage2(HnnModel& model, const SplitPart& train, const SplitPart& val, const TrainConfig& config,
                  TrainTrace& trace) {
  config.validate();
  require_nonempty(train, "training");
  require_nonempty(val, "validation");
  if (config.stage2_epochs == 0) return;
  Rng rng(config.seed ^ kStage2Stream);
  auto step = [&](Tape& tape, const Batch& batch) {
    const auto out = model.forward(tape, batch.x);
    const auto noise = rng.normals(batch.y.size());
    const auto samples = sample_predictions(tape, out, noise, true);
    return config.mmd_estimator == EstimatorKind::kUnbiased ? mmd2_unbiased(tape, batch.y, samples, config.kernels)
                                                            : mmd2_biased(tape, batch.y, samples, config.kernels);
  };
  run_stage(2, model, train, val, config, config.stage2_epochs, rng, step, trace);
}

TrainTrace train_two_stage(HnnModel& model, const SplitPart& train, const SplitPart& val, const TrainConfig& config) {
  TrainTrace trace;
  train_stage1(model, train, val, config, trace);
  train_stage2(model, train, val, config, trace);
  return trace;
}

}  // namespace mmdcal
