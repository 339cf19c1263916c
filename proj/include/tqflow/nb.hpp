#pragma once

#include <vector>

namespace tqflow {

/// Negative-binomial parameters matching a mean/variance pair with
/// 0 < rho < eta: p = rho/eta, r = rho^2/(eta - rho).
struct NBParams {
    double p;
    double r;
};

NBParams nb_params(double rho, double eta);

/// Which closed form nb_pmf uses at a point of the domain 0 <= rho <= eta.
enum class NBBranch { Empty, Poisson, Interior };

/// rho <= 1e-14 is treated as the empty ray and eta - rho <= 1e-10*max(eta, 1)
/// as the Poisson ray. Throws PreconditionError outside the domain.
NBBranch nb_branch(double rho, double eta);

/// P_n(rho, eta): the negative-binomial pmf with matched moments, extended
/// continuously to the rays rho = 0 (point mass at 0) and rho = eta (Poisson).
double nb_pmf(long long n, double rho, double eta);

/// P_0 .. P_{count-1} by the ratio recurrence; agrees with nb_pmf.
std::vector<double> nb_pmf_prefix(int count, double rho, double eta);

/// Q_n = P_n / P_0 = (1/n!) prod_{i<n} ((1 - rho/eta) i + rho^2/eta), interior only.
double nb_aux_q(long long n, double rho, double eta);

double poisson_pmf(long long n, double mean);

/// sum_{i<s} (s - i) P_i. Equals s * (1 - E[v]) for the throttle v with threshold s.
double deficit_sum(double rho, double eta, int sigma_star);

/// sum_{i<s} (2 rho + 1 - 2 i)(s - i) P_i.
double weighted_deficit_sum(double rho, double eta, int sigma_star);

struct DeficitPair {
    double deficit;
    double weighted;
};

/// Both sums from a single pmf prefix.
DeficitPair deficit_sums(double rho, double eta, int sigma_star);

}  // namespace tqflow
