#pragma once

#include <vector>

#include "tqflow/model.hpp"

namespace tqflow {

/// Stationary law of one stage (a birth-death chain with birth rate c0 and
/// death rate c*v(j)). Above the threshold the pmf is geometric with ratio
/// c0/c, which the moment routines sum in closed form.
struct StationaryLaw {
    int sigma_star = 1;
    double ratio = 0.0;                ///< c0 / c
    double normalizer = 1.0;           ///< sum of the unnormalized weights over all j
    int truncation = 0;                ///< J_trunc
    double tail_bound = 0.0;           ///< mass beyond J_trunc
    std::vector<double> pmf;           ///< pi_0 .. pi_{J_trunc}

    /// pi_j for any j >= 0, including beyond the stored truncation.
    double probability(long long j) const;
};

/// Throws PreconditionError if c0 >= c (no stationary law), InvalidParameter
/// for negative c0 or non-positive tail_eps.
StationaryLaw stage_stationary_pmf(double c0, double c, int sigma_star, double tail_eps = 1e-12);

/// One law per stage; the joint law is their product. Requires a
/// time-invariant input with rate below c.
std::vector<StationaryLaw> product_stationary_pmf(const ModelConfig& config, double tail_eps = 1e-12);

/// E[X^n] under the law. n = 1, 2 use closed-form geometric tails; higher n
/// sums the tail until the addend drops below tolerance * running sum.
double stationary_moment(const StationaryLaw& law, int n, double tolerance = 1e-14);

double stationary_variance(const StationaryLaw& law);

}  // namespace tqflow
