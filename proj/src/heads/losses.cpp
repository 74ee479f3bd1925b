#include "heads/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "common/error.hpp"

namespace nodulekit::heads {

void SceConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "SCE weights need alpha, beta >= 0 and alpha + beta > 0");
  }
  if (!(clamp_log_zero < 0.0)) fail(ErrorCode::kInvalidArgument, "SCE log-zero clamp must be < 0");
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

namespace {

void check_distribution(std::span<const double> p, const char* what) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorCode::kInvalidDistribution, std::string(what) + " has a negative or non-finite entry");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    fail(ErrorCode::kInvalidDistribution, std::string(what) + " does not sum to 1");
  }
}

void check_pair(std::span<const double> t, std::span<const double> s) {
  if (t.size() != s.size() || t.empty()) fail(ErrorCode::kInvalidDistribution, "distribution sizes differ");
  check_distribution(t, "target");
  check_distribution(s, "prediction");
}

}  // namespace

double ce_loss(std::span<const double> t, std::span<const double> s) {
  check_pair(t, s);
  double loss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == 0.0) continue;
    if (s[i] <= 0.0) fail(ErrorCode::kInvalidDistribution, "prediction is zero where target is not");
    loss -= t[i] * std::log(s[i]);
  }
  return loss;
}

double rce_loss(std::span<const double> t, std::span<const double> s, double clamp_log_zero) {
  check_pair(t, s);
  double loss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double log_t = t[i] > 0.0 ? std::log(t[i]) : clamp_log_zero;
    loss -= s[i] * log_t;
  }
  return loss;
}

double sce_loss(std::span<const double> t, std::span<const double> s, const SceConfig& cfg) {
  const double ce = ce_loss(t, s);
  if (cfg.beta == 0.0) return cfg.alpha * ce;
  return cfg.alpha * ce + cfg.beta * rce_loss(t, s, cfg.clamp_log_zero);
}

std::vector<double> sce_grad_logits(std::span<const double> t, std::span<const double> s,
                                    const SceConfig& cfg) {
  // CE through softmax: s - t.
  // RCE = -sum_i s_i c_i with c_i = log t_i (or the clamp):
  //   d/dz_j = -s_j (c_j - sum_i s_i c_i).
  const std::size_t n = s.size();
  std::vector<double> c(n);
  double mean_c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = t[i] > 0.0 ? std::log(t[i]) : cfg.clamp_log_zero;
    mean_c += s[i] * c[i];
  }
  std::vector<double> g(n);
  for (std::size_t j = 0; j < n; ++j) {
    g[j] = cfg.alpha * (s[j] - t[j]) - cfg.beta * s[j] * (c[j] - mean_c);
  }
  return g;
}

double smooth_l1(double d) noexcept {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

double smooth_l1_grad(double d) noexcept {
  if (d >= 1.0) return 1.0;
  if (d <= -1.0) return -1.0;
  return d;
}

double bbox_loss(const std::array<double, 4>& pred, const std::array<double, 4>& target) noexcept {
  double loss = 0.0;
  for (int c = 0; c < 4; ++c) loss += smooth_l1(pred[c] - target[c]);
  return loss;
}

}  // namespace nodulekit::heads
