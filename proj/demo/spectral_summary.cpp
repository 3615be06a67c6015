// Prints the ergodicity diagnostics of the default two-regime chain: the
// stationary distribution, the moment-exponent cap p0, and eta_p over a grid.

#include <iostream>

#include "siv/regime.hpp"

int main() {
  Eigen::MatrixXd q(2, 2);
  q << -5.5, 5.5, 8.0, -8.0;
  const siv::RegimeChain chain(q);

  const Eigen::VectorXd pi = siv::stationary_distribution(chain);
  std::cout << "pi = (" << pi(0) << ", " << pi(1) << ")\n";

  Eigen::VectorXd rho(2);
  rho << -1.0, -0.5;
  const double p0 = siv::p0_threshold(chain, rho);
  std::cout << "p0 = " << p0 << "\n";
  for (int k = 1; k <= 10; ++k) {
    const double p = p0 * k / 10.0;
    const auto rep = siv::spectral_report(chain, rho, p);
    std::cout << "p = " << p << "  eta_p = " << rep.eta_p
              << (rep.eta_positive ? "  (contractive)" : "") << "\n";
  }

  const siv::RegimePath path = siv::sample_path(chain, 0, 1000.0, 7);
  const auto occ = path.occupation_fractions(2);
  std::cout << "occupation over 1000y: state1 " << occ[0] << ", state2 " << occ[1] << "\n";
  return 0;
}
