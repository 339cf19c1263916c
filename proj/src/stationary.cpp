#include "tqflow/stationary.hpp"

#include <cmath>
#include <string>

#include "tqflow/errors.hpp"

namespace tqflow {

namespace {

// Unnormalized weight (c0/c)^j / prod_{k<=j} v(k) for j <= sigma_star.
std::vector<double> band_weights(double q, int sigma_star) {
    std::vector<double> w(static_cast<std::size_t>(sigma_star) + 1);
    w[0] = 1.0;
    for (int j = 1; j <= sigma_star; ++j) {
        w[static_cast<std::size_t>(j)] = w[static_cast<std::size_t>(j - 1)] * q * sigma_star / j;
    }
    return w;
}

}  // namespace

double StationaryLaw::probability(long long j) const {
    if (j < 0) return 0.0;
    if (j <= truncation) return pmf[static_cast<std::size_t>(j)];
    if (ratio == 0.0) return 0.0;
    // Geometric continuation from the last stored value (truncation >= sigma_star).
    return pmf.back() * std::pow(ratio, static_cast<double>(j - truncation));
}

StationaryLaw stage_stationary_pmf(double c0, double c, int sigma_star, double tail_eps) {
    if (sigma_star < 1) throw InvalidParameter("throttling threshold must be >= 1");
    if (!(c > 0.0)) throw InvalidParameter("max rate must be > 0");
    if (!(c0 >= 0.0)) throw InvalidParameter("input rate must be >= 0");
    if (!(tail_eps > 0.0)) throw InvalidParameter("tail tolerance must be > 0");
    if (c0 >= c) {
        throw PreconditionError("no stationary distribution: input rate " + std::to_string(c0) +
                                " is not below the max rate " + std::to_string(c));
    }
    StationaryLaw law;
    law.sigma_star = sigma_star;
    law.ratio = c0 / c;
    if (c0 == 0.0) {
        law.pmf = {1.0};
        law.truncation = 0;
        law.normalizer = 1.0;
        law.tail_bound = 0.0;
        return law;
    }
    const double q = law.ratio;
    const auto w = band_weights(q, sigma_star);
    double band = 0.0;
    for (int j = 0; j < sigma_star; ++j) band += w[static_cast<std::size_t>(j)];
    const double w_star = w.back();
    // Sum over j >= sigma_star of w_star * q^(j - sigma_star).
    law.normalizer = band + w_star / (1.0 - q);

    // Smallest J >= sigma_star whose tail mass beyond J is at most tail_eps:
    // tail(J) = w_star q^(J+1-sigma_star) / ((1-q) Z).
    const double tail_at_star = w_star / ((1.0 - q) * law.normalizer);
    int extra = 0;
    if (tail_at_star * q > tail_eps) {
        extra = static_cast<int>(std::ceil(std::log(tail_eps / tail_at_star) / std::log(q))) - 1;
        if (extra < 0) extra = 0;
        while (tail_at_star * std::pow(q, extra + 1) > tail_eps) ++extra;
    }
    law.truncation = sigma_star + extra;
    law.tail_bound = tail_at_star * std::pow(q, extra + 1);

    law.pmf.resize(static_cast<std::size_t>(law.truncation) + 1);
    for (int j = 0; j <= law.truncation; ++j) {
        const double weight = j <= sigma_star ? w[static_cast<std::size_t>(j)] : w_star * std::pow(q, j - sigma_star);
        law.pmf[static_cast<std::size_t>(j)] = weight / law.normalizer;
    }
    return law;
}

std::vector<StationaryLaw> product_stationary_pmf(const ModelConfig& config, double tail_eps) {
    if (!is_time_invariant(config.input())) {
        throw PreconditionError("stationary law requires a time-invariant input rate");
    }
    const double c0 = config.input_rate(0.0);
    std::vector<StationaryLaw> laws;
    laws.reserve(static_cast<std::size_t>(config.num_stages()));
    for (int k = 0; k < config.num_stages(); ++k) {
        laws.push_back(stage_stationary_pmf(c0, config.max_rate(), config.threshold(k), tail_eps));
    }
    return laws;
}

double stationary_moment(const StationaryLaw& law, int n, double tolerance) {
    if (n < 1) throw InvalidParameter("moment order must be >= 1");
    const double q = law.ratio;
    if (q == 0.0) return 0.0;
    const int s = law.sigma_star;
    double band = 0.0;
    for (int j = 1; j < s; ++j) band += std::pow(static_cast<double>(j), n) * law.pmf[static_cast<std::size_t>(j)];
    const double pi_star = law.pmf[static_cast<std::size_t>(s)];
    // Tail sum_{m>=0} (s+m)^n q^m, closed form for n = 1, 2.
    const double g0 = 1.0 / (1.0 - q);
    const double g1 = q / ((1.0 - q) * (1.0 - q));
    const double g2 = q * (1.0 + q) / ((1.0 - q) * (1.0 - q) * (1.0 - q));
    if (n == 1) return band + pi_star * (s * g0 + g1);
    if (n == 2) return band + pi_star * (double(s) * s * g0 + 2.0 * s * g1 + g2);
    double tail = 0.0;
    double qm = 1.0;
    for (long long m = 0;; ++m) {
        const double addend = std::pow(static_cast<double>(s + m), n) * qm;
        tail += addend;
        if (addend <= tolerance * tail && m > n) break;
        qm *= q;
    }
    return band + pi_star * tail;
}

double stationary_variance(const StationaryLaw& law) {
    const double m1 = stationary_moment(law, 1);
    return std::max(0.0, stationary_moment(law, 2) - m1 * m1);
}

}  // namespace tqflow
