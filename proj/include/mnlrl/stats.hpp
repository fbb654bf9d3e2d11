#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "mnlrl/errors.hpp"

namespace mnlrl::stats {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double mean(std::span<const double> xs)
{
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double stddev(std::span<const double> xs)
{
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

struct SlopeTest {
    double slope = 0.0;
    double intercept = 0.0;
    double std_error = 0.0;
    double t_stat = 0.0;
    double p_two_sided = 1.0;
    double p_positive = 1.0;  // one-sided, H1: slope > 0
};

/// Ordinary least squares of y on x with a t-test on the slope.
inline SlopeTest slope_t_test(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 3) throw InvalidArgument("slope test needs >= 3 paired points");
    const double n = static_cast<double>(x.size());
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) throw InvalidArgument("slope test needs distinct x values");
    SlopeTest r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - r.intercept - r.slope * x[i];
        sse += e * e;
    }
    r.std_error = std::sqrt(sse / (n - 2.0) / sxx);
    if (r.std_error == 0.0) {
        r.t_stat = r.slope == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.slope);
        r.p_two_sided = r.slope == 0.0 ? 1.0 : 0.0;
        r.p_positive = r.slope > 0.0 ? 0.0 : 1.0;
        return r;
    }
    r.t_stat = r.slope / r.std_error;
    const boost::math::students_t dist(n - 2.0);
    r.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t_stat)));
    r.p_positive = boost::math::cdf(boost::math::complement(dist, r.t_stat));
    return r;
}

/// One-sided Clopper-Pearson lower confidence bound for a binomial rate.
inline double binomial_lower_bound(long successes, long trials, double confidence)
{
    if (trials <= 0 || successes < 0 || successes > trials) throw InvalidArgument("bad binomial counts");
    if (successes == 0) return 0.0;
    const boost::math::beta_distribution<double> dist(static_cast<double>(successes),
                                                      static_cast<double>(trials - successes + 1));
    return boost::math::quantile(dist, 1.0 - confidence);
}

/// Trailing rolling mean: out[i] averages xs[max(0, i-window+1) .. i].
/// Each window is summed as offsets from its first element, so constant
/// stretches come back exactly.
inline std::vector<double> rolling_mean(std::span<const double> xs, int window)
{
    if (window < 1) throw InvalidArgument("window must be >= 1");
    std::vector<double> out(xs.size());
    const auto w = static_cast<std::size_t>(window);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const std::size_t first = i + 1 >= w ? i + 1 - w : 0;
        const double ref = xs[first];
        double acc = 0.0;
        for (std::size_t j = first; j <= i; ++j) acc += xs[j] - ref;
        out[i] = ref + acc / static_cast<double>(i - first + 1);
    }
    return out;
}

}  // namespace mnlrl::stats
