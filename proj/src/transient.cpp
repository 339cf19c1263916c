#include "tqflow/transient.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tqflow/errors.hpp"

namespace tqflow {

TruncatedGenerator::TruncatedGenerator(const ModelConfig& config, int cap, double input_rate)
    : cap_(cap), num_stages_(config.num_stages()), size_(1) {
    if (cap < 1) throw InvalidParameter("oracle cap must be >= 1");
    for (int k = 0; k < num_stages_; ++k) {
        size_ *= static_cast<std::size_t>(cap) + 1;
        if (size_ > kMaxOracleStates) {
            throw PreconditionError("oracle state space (cap+1)^N exceeds " + std::to_string(kMaxOracleStates));
        }
    }
    exit_rates_.assign(size_, 0.0);
    transitions_.reserve(size_ * static_cast<std::size_t>(num_stages_ + 1));
    std::vector<std::size_t> stride(static_cast<std::size_t>(num_stages_));
    std::size_t s = 1;
    for (auto& st : stride) {
        st = s;
        s *= static_cast<std::size_t>(cap) + 1;
    }
    for (std::size_t idx = 0; idx < size_; ++idx) {
        const auto counts = counts_of(idx);
        auto add = [&](std::size_t to, double rate) {
            if (rate <= 0.0) return;
            transitions_.push_back({static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(to), rate});
            exit_rates_[idx] += rate;
        };
        if (counts[0] < cap) add(idx + stride[0], input_rate);
        for (int k = 0; k < num_stages_; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            if (counts[ku] == 0) continue;
            const double rate = config.stage_rate(k, counts[ku]);
            if (k + 1 == num_stages_) {
                add(idx - stride[ku], rate);
            } else if (counts[ku + 1] < cap) {
                add(idx - stride[ku] + stride[ku + 1], rate);
            }
        }
    }
}

std::size_t TruncatedGenerator::index_of(const std::vector<std::int64_t>& counts) const {
    std::size_t idx = 0;
    for (int k = num_stages_ - 1; k >= 0; --k) {
        const auto c = counts[static_cast<std::size_t>(k)];
        if (c < 0 || c > cap_) throw PreconditionError("state lies outside the truncated space");
        idx = idx * (static_cast<std::size_t>(cap_) + 1) + static_cast<std::size_t>(c);
    }
    return idx;
}

std::vector<std::int64_t> TruncatedGenerator::counts_of(std::size_t index) const {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_stages_));
    for (auto& c : counts) {
        c = static_cast<std::int64_t>(index % (static_cast<std::size_t>(cap_) + 1));
        index /= static_cast<std::size_t>(cap_) + 1;
    }
    return counts;
}

void TruncatedGenerator::apply_transpose(const std::vector<double>& x, std::vector<double>& y) const {
    y.assign(size_, 0.0);
    for (std::size_t i = 0; i < size_; ++i) y[i] = -exit_rates_[i] * x[i];
    for (const auto& tr : transitions_) y[tr.to] += x[tr.from] * tr.rate;
}

std::vector<double> TransientResult::marginal(int stage) const {
    std::vector<double> out(static_cast<std::size_t>(cap) + 1, 0.0);
    const std::size_t radix = static_cast<std::size_t>(cap) + 1;
    std::size_t stride = 1;
    for (int k = 0; k < stage; ++k) stride *= radix;
    for (std::size_t idx = 0; idx < pmf.size(); ++idx) out[(idx / stride) % radix] += pmf[idx];
    return out;
}

namespace {

// p <- p exp(h Q) by uniformization. Splits h so each chunk has
// Lambda*h_chunk <= 32, keeping exp(-Lambda h) well away from underflow.
void propagate(const TruncatedGenerator& gen, std::vector<double>& p, double h, double tolerance) {
    if (h <= 0.0) return;
    const double lambda = *std::max_element(gen.exit_rates().begin(), gen.exit_rates().end());
    if (lambda <= 0.0) return;
    const int chunks = std::max(1, static_cast<int>(std::ceil(lambda * h / 32.0)));
    const double chunk_h = h / chunks;
    const double lt = lambda * chunk_h;
    const double chunk_tol = tolerance / chunks;

    std::vector<double> term(p.size());
    std::vector<double> qterm(p.size());
    std::vector<double> acc(p.size());
    for (int c = 0; c < chunks; ++c) {
        term = p;
        double weight = std::exp(-lt);
        double cumulative = weight;
        for (std::size_t i = 0; i < p.size(); ++i) acc[i] = weight * term[i];
        for (int k = 1; 1.0 - cumulative > chunk_tol; ++k) {
            // term <- term (I + Q / lambda)
            gen.apply_transpose(term, qterm);
            for (std::size_t i = 0; i < p.size(); ++i) term[i] += qterm[i] / lambda;
            weight *= lt / k;
            cumulative += weight;
            for (std::size_t i = 0; i < p.size(); ++i) acc[i] += weight * term[i];
            if (k > 100000) throw NumericalError("uniformization failed to converge");
        }
        p = acc;
    }
}

}  // namespace

TransientResult transient_oracle(const ModelConfig& config, int cap, double t, const LatticeState& initial,
                                 double tolerance) {
    if (!(t >= 0.0)) throw InvalidParameter("oracle time must be >= 0");
    if (std::holds_alternative<SinusoidInput>(config.input())) {
        throw PreconditionError("the transient oracle supports constant or piecewise constant input only");
    }
    if (initial.counts.size() != static_cast<std::size_t>(config.num_stages())) {
        throw InvalidParameter("initial state size does not match the number of stages");
    }

    std::vector<double> cuts = {0.0};
    for (double b : input_breakpoints(config.input(), 0.0, t)) cuts.push_back(b);
    cuts.push_back(t);

    TruncatedGenerator first(config, cap, config.input_rate(0.0));
    std::vector<double> p(first.size(), 0.0);
    p[first.index_of(initial.counts)] = 1.0;
    for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
        TruncatedGenerator gen(config, cap, config.input_rate(cuts[seg]));
        propagate(gen, p, cuts[seg + 1] - cuts[seg], tolerance / static_cast<double>(cuts.size()));
    }

    TransientResult result;
    result.cap = cap;
    result.num_stages = config.num_stages();
    result.time = t;
    result.mean.assign(static_cast<std::size_t>(config.num_stages()), 0.0);
    result.variance.assign(static_cast<std::size_t>(config.num_stages()), 0.0);
    for (std::size_t idx = 0; idx < p.size(); ++idx) {
        const auto counts = first.counts_of(idx);
        if (std::any_of(counts.begin(), counts.end(), [cap](std::int64_t c) { return c >= cap - 2; })) {
            result.leak += p[idx];
        }
    }
    result.pmf = std::move(p);
    for (int k = 0; k < config.num_stages(); ++k) {
        const auto m = result.marginal(k);
        double mean = 0.0;
        for (std::size_t j = 0; j < m.size(); ++j) mean += static_cast<double>(j) * m[j];
        double var = 0.0;
        for (std::size_t j = 0; j < m.size(); ++j) var += (static_cast<double>(j) - mean) * (static_cast<double>(j) - mean) * m[j];
        result.mean[static_cast<std::size_t>(k)] = mean;
        result.variance[static_cast<std::size_t>(k)] = var;
    }
    return result;
}

}  // namespace tqflow
