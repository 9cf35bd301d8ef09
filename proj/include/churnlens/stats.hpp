#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "churnlens/error.hpp"

namespace churnlens {

/// Standard normal CDF, Phi(z) = erfc(-z / sqrt(2)) / 2. Going through erfc
/// keeps full relative accuracy in the lower tail.
inline double normal_cdf(double z) {
    if (!std::isfinite(z)) throw Error(ErrorCode::NonFiniteInput, "normal_cdf of non-finite value");
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

/// 2 * (1 - Phi(|z|)), evaluated as erfc(|z| / sqrt(2)) to avoid cancellation.
inline double two_sided_p(double z) {
    if (!std::isfinite(z)) throw Error(ErrorCode::NonFiniteInput, "two_sided_p of non-finite value");
    return std::clamp(std::erfc(std::fabs(z) / std::sqrt(2.0)), 0.0, 1.0);
}

/// x successes out of n trials.
struct ProportionSample {
    std::uint64_t successes = 0;
    std::uint64_t trials = 0;

    double proportion() const { return static_cast<double>(successes) / static_cast<double>(trials); }
};

struct ScoreTestResult {
    double z = 0.0;
    double p_two_sided = 1.0;
    double pooled_p = 0.0;
    ProportionSample first;
    ProportionSample second;
};

/// Pooled-variance two-proportion score test:
///
///     z = (p1 - p2) / sqrt(p (1 - p) (1/n1 + 1/n2)),  p = (x + y) / (n1 + n2)
///
/// No continuity correction. A pooled proportion of exactly 0 or 1 has zero
/// variance and is reported as DegeneratePool.
inline ScoreTestResult score_test(ProportionSample s1, ProportionSample s2) {
    for (const auto& s : {s1, s2}) {
        if (s.trials == 0 || s.successes > s.trials) {
            throw Error(ErrorCode::InvalidSample, "sample needs 0 <= successes <= trials and trials >= 1 (got " +
                                                      std::to_string(s.successes) + "/" + std::to_string(s.trials) + ")");
        }
    }
    const double n1 = static_cast<double>(s1.trials);
    const double n2 = static_cast<double>(s2.trials);
    const std::uint64_t pooled_successes = s1.successes + s2.successes;
    const std::uint64_t pooled_trials = s1.trials + s2.trials;
    if (pooled_successes == 0 || pooled_successes == pooled_trials) {
        throw Error(ErrorCode::DegeneratePool, "pooled proportion is " + std::string(pooled_successes == 0 ? "0" : "1"));
    }
    ScoreTestResult r;
    r.first = s1;
    r.second = s2;
    r.pooled_p = static_cast<double>(pooled_successes) / static_cast<double>(pooled_trials);
    const double se = std::sqrt(r.pooled_p * (1.0 - r.pooled_p) * (1.0 / n1 + 1.0 / n2));
    r.z = (s1.proportion() - s2.proportion()) / se;
    r.p_two_sided = two_sided_p(r.z);
    return r;
}

}  // namespace churnlens
