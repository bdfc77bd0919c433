#pragma once

#include <array>
#include <cmath>
#include <string_view>

namespace autoscout {

enum class Arm { Sparse = 0, Dense = 1 };

inline std::string_view arm_name(Arm a) { return a == Arm::Sparse ? "sparse" : "dense"; }

/// Two-armed UCB1 state with an exponentially decaying exploration weight
/// C(t) = C0 * gamma^t. Pull counts are real-valued so that statistics can be
/// down-weighted into priors.
struct BanditState {
  std::array<double, 2> reward{0.0, 0.0};  // Q_a
  std::array<double, 2> pulls{0.0, 0.0};   // N_a
  double c0 = 1.414;
  double gamma = 0.995;
  std::size_t t = 0;

  double total_pulls() const { return pulls[0] + pulls[1]; }
  double exploration() const { return c0 * std::pow(gamma, static_cast<double>(t)); }
  double mean(Arm a) const {
    const auto i = static_cast<std::size_t>(a);
    return pulls[i] > 0.0 ? reward[i] / pulls[i] : 0.0;
  }
};

/// Q_a/N_a + C(t) sqrt(ln N_total / N_a); +inf for an arm never pulled.
double ucb_index(const BanditState& b, Arm a);

/// Unpulled arms first (Sparse before Dense), otherwise the larger UCB index;
/// ties go to Sparse.
Arm select_arm(const BanditState& b);

void record_pull(BanditState& b, Arm a, double reward);

/// Multiplies every Q_a and N_a by `lambda`, keeping each arm's mean.
void scale_to_prior(BanditState& b, double lambda);

}  // namespace autoscout
