#include "tqflow/nb.hpp"

#include <cmath>
#include <string>

#include "tqflow/errors.hpp"

namespace tqflow {

namespace {

constexpr double kEmptyRay = 1e-14;
constexpr double kPoissonBand = 1e-10;

void check_domain(double rho, double eta) {
    if (!(rho >= 0.0) || !(eta >= rho) || !std::isfinite(eta)) {
        throw PreconditionError("moment pair (" + std::to_string(rho) + ", " + std::to_string(eta) +
                                ") is outside the domain 0 <= rho <= eta");
    }
}

// log of Gamma(n + r) / Gamma(r). Direct product for moderate n keeps full
// relative accuracy when r is huge (near the Poisson ray).
double log_rising(long long n, double r) {
    if (n <= 256) {
        double s = 0.0;
        for (long long i = 0; i < n; ++i) s += std::log(r + static_cast<double>(i));
        return s;
    }
    return std::lgamma(static_cast<double>(n) + r) - std::lgamma(r);
}

}  // namespace

NBParams nb_params(double rho, double eta) {
    if (nb_branch(rho, eta) != NBBranch::Interior) {
        throw PreconditionError("negative-binomial parameters exist only for 0 < rho < eta");
    }
    return NBParams{rho / eta, rho * rho / (eta - rho)};
}

NBBranch nb_branch(double rho, double eta) {
    check_domain(rho, eta);
    if (rho <= kEmptyRay) return NBBranch::Empty;
    if (eta - rho <= kPoissonBand * std::max(eta, 1.0)) return NBBranch::Poisson;
    return NBBranch::Interior;
}

double poisson_pmf(long long n, double mean) {
    if (n < 0) return 0.0;
    if (mean == 0.0) return n == 0 ? 1.0 : 0.0;
    return std::exp(static_cast<double>(n) * std::log(mean) - mean - std::lgamma(static_cast<double>(n) + 1.0));
}

double nb_pmf(long long n, double rho, double eta) {
    const auto branch = nb_branch(rho, eta);
    if (n < 0) return 0.0;
    switch (branch) {
        case NBBranch::Empty:
            return n == 0 ? 1.0 : 0.0;
        case NBBranch::Poisson:
            return poisson_pmf(n, rho);
        case NBBranch::Interior:
            break;
    }
    const double gap = eta - rho;
    const double r = rho * rho / gap;
    // r log p with p = 1 - gap/eta; n log(1 - p) = n log(gap/eta).
    const double log_p_term = r * std::log1p(-gap / eta);
    const double log_q_term = static_cast<double>(n) * (std::log(gap) - std::log(eta));
    const double log_pmf =
        log_rising(n, r) - std::lgamma(static_cast<double>(n) + 1.0) + log_p_term + log_q_term;
    return std::exp(log_pmf);
}

std::vector<double> nb_pmf_prefix(int count, double rho, double eta) {
    std::vector<double> out(static_cast<std::size_t>(std::max(count, 0)), 0.0);
    if (out.empty()) return out;
    const auto branch = nb_branch(rho, eta);
    if (branch == NBBranch::Empty) {
        out[0] = 1.0;
        return out;
    }
    if (branch == NBBranch::Poisson) {
        out[0] = std::exp(-rho);
        for (std::size_t i = 1; i < out.size(); ++i) out[i] = out[i - 1] * rho / static_cast<double>(i);
        return out;
    }
    const double gap = eta - rho;
    const double r = rho * rho / gap;
    const double one_minus_p = gap / eta;
    out[0] = std::exp(r * std::log1p(-one_minus_p));
    for (std::size_t i = 1; i < out.size(); ++i) {
        out[i] = out[i - 1] * (r + static_cast<double>(i - 1)) / static_cast<double>(i) * one_minus_p;
    }
    return out;
}

double nb_aux_q(long long n, double rho, double eta) {
    if (nb_branch(rho, eta) != NBBranch::Interior) {
        throw PreconditionError("auxiliary function is defined on the interior 0 < rho < eta only");
    }
    if (n < 1) throw InvalidParameter("auxiliary function needs n >= 1");
    const double slope = 1.0 - rho / eta;
    const double base = rho * rho / eta;
    double q = 1.0;
    for (long long i = 0; i < n; ++i) q *= (slope * static_cast<double>(i) + base) / static_cast<double>(i + 1);
    return q;
}

DeficitPair deficit_sums(double rho, double eta, int sigma_star) {
    if (sigma_star < 1) throw InvalidParameter("throttling threshold must be >= 1");
    const auto branch = nb_branch(rho, eta);
    if (branch == NBBranch::Empty) {
        const double s = sigma_star;
        return DeficitPair{s, (2.0 * rho + 1.0) * s};
    }
    // P_i by the ratio recurrence, without materializing the prefix.
    double pmf = 0.0;
    double growth = 0.0;
    double r = 0.0;
    if (branch == NBBranch::Poisson) {
        pmf = std::exp(-rho);
    } else {
        const double gap = eta - rho;
        r = rho * rho / gap;
        growth = gap / eta;
        pmf = std::exp(r * std::log1p(-growth));
    }
    DeficitPair out{0.0, 0.0};
    for (int i = 0; i < sigma_star; ++i) {
        if (i > 0) {
            pmf *= branch == NBBranch::Poisson ? rho / i : (r + (i - 1)) / i * growth;
        }
        const double term = static_cast<double>(sigma_star - i) * pmf;
        out.deficit += term;
        out.weighted += (2.0 * rho + 1.0 - 2.0 * i) * term;
    }
    return out;
}

double deficit_sum(double rho, double eta, int sigma_star) { return deficit_sums(rho, eta, sigma_star).deficit; }

double weighted_deficit_sum(double rho, double eta, int sigma_star) {
    return deficit_sums(rho, eta, sigma_star).weighted;
}

}  // namespace tqflow
