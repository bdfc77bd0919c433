#include "autoscout/bandit.hpp"

#include <algorithm>
#include <limits>

namespace autoscout {

double ucb_index(const BanditState& b, Arm a) {
  const auto i = static_cast<std::size_t>(a);
  if (b.pulls[i] <= 0.0) return std::numeric_limits<double>::infinity();
  // Down-weighted priors can leave N_total below 1; the bonus never goes negative.
  const double log_total = std::max(0.0, std::log(b.total_pulls()));
  return b.reward[i] / b.pulls[i] + b.exploration() * std::sqrt(log_total / b.pulls[i]);
}

Arm select_arm(const BanditState& b) {
  if (b.pulls[0] <= 0.0) return Arm::Sparse;
  if (b.pulls[1] <= 0.0) return Arm::Dense;
  return ucb_index(b, Arm::Dense) > ucb_index(b, Arm::Sparse) ? Arm::Dense : Arm::Sparse;
}

void record_pull(BanditState& b, Arm a, double reward) {
  const auto i = static_cast<std::size_t>(a);
  b.reward[i] += reward;
  b.pulls[i] += 1.0;
}

void scale_to_prior(BanditState& b, double lambda) {
  for (std::size_t i = 0; i < 2; ++i) {
    b.reward[i] *= lambda;
    b.pulls[i] *= lambda;
  }
}

}  // namespace autoscout
