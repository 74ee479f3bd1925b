#pragma once

#include <array>
#include <span>
#include <vector>

namespace nodulekit::heads {

/// Weights of the symmetric cross-entropy: alpha * CE + beta * RCE, where
/// log 0 inside RCE is replaced by `clamp_log_zero`.
struct SceConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double clamp_log_zero = -4.0;

  void validate() const;
};

std::vector<double> softmax(std::span<const double> logits);

/// -sum t_i log s_i with 0 log 0 = 0.
double ce_loss(std::span<const double> target, std::span<const double> predicted);

/// -sum s_i log t_i with log 0 = clamp_log_zero.
double rce_loss(std::span<const double> target, std::span<const double> predicted,
                double clamp_log_zero);

double sce_loss(std::span<const double> target, std::span<const double> predicted,
                const SceConfig& cfg);

/// dSCE/dlogits where predicted = softmax(logits).
std::vector<double> sce_grad_logits(std::span<const double> target,
                                    std::span<const double> predicted, const SceConfig& cfg);

/// Smooth-L1 with transition at 1.
double smooth_l1(double d) noexcept;
double smooth_l1_grad(double d) noexcept;

double bbox_loss(const std::array<double, 4>& pred, const std::array<double, 4>& target) noexcept;

}  // namespace nodulekit::heads
