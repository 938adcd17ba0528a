#pragma once

// Two-hidden-layer ReLU regressor on standardized latents, trained with
// AdamW and early stopping on validation R².

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "latprobe/matrix.hpp"
#include "latprobe/probe.hpp"
#include "latprobe/stats.hpp"

namespace latprobe::mlp {

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct TrainOptions {
  std::size_t hidden = 256;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 8192;
  std::size_t max_epochs = 15;
  std::size_t min_epochs = 6;
  std::size_t patience = 4;
  double min_improvement = 1e-3;
  std::uint64_t seed = 42;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_r2 = 0.0;
};

struct MlpModel {
  std::string target;
  std::vector<Layer> layers;  // input -> hidden -> hidden -> 1
  stats::Standardizer x_scaler;
  stats::ScalarStandardizer y_scaler;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  probe::SplitScores r2;
  std::uint64_t split_fingerprint = 0;

  std::size_t dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }

  /// Output in standardized target units for a standardized input.
  double forward_standardized(std::span<const double> zs) const;
  /// Raw latent in, raw target out.
  double predict(std::span<const double> z) const;
  Vector predict_rows(const Matrix& z, std::span<const std::size_t> rows) const;
};

/// Throws TooFewRows (train rows < 2 x hidden), ZeroVarianceTarget,
/// NonFiniteLoss.
MlpModel train_mlp(const Matrix& z, std::span<const double> y, const stats::SplitAssignment& split,
                   const std::string& target, const TrainOptions& opts = {});

/// Exact gradient of forward_standardized at a standardized point. ReLU kinks
/// contribute 0.
Vector gradient(const MlpModel& model, std::span<const double> zs);

struct SteeringPath {
  std::string target;
  double step = 0.0;
  int sign = 1;
  std::vector<Vector> standardized;  // z~_0 .. z~_k
  std::vector<Vector> raw;
  Vector predicted;                  // raw target units
  bool vanishing_gradient = false;
};

inline constexpr double kSteerNormFloor = 1e-12;
inline constexpr double kVanishingGradient = 1e-8;

/// z~_{k+1} = z~_k + step * sign * g / (||g|| + 1e-12). Stops early and flags
/// the path when ||g|| < 1e-8. Throws InvalidArgument for step <= 0.
SteeringPath local_steer(const MlpModel& model, std::span<const double> start_standardized, double step,
                         std::size_t steps, int sign);

struct DeltaR2 {
  std::string target;
  double linear_r2 = 0.0;
  double mlp_r2 = 0.0;
  double delta = 0.0;
  std::string regime;
};

/// Test-set R² difference. Throws SplitMismatch when the fits used
/// different splits.
DeltaR2 delta_r2(const probe::ProbeModel& linear, const MlpModel& model);
std::string regime_label(double delta, double linear_r2);

/// One JSON header line, then the parameters as little-endian float64 in
/// layer order (weights row-major, then biases).
void save(const MlpModel& model, const std::filesystem::path& path);
MlpModel load(const std::filesystem::path& path);

}  // namespace latprobe::mlp
