#pragma once

#include <aprol/error.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace aprol {

    struct RankSumResult {
        double u = 0.;         ///< Mann-Whitney U of the first sample
        double p_value = 1.;   ///< two-sided
    };

    /// Wilcoxon-Mann-Whitney rank-sum test. U counts pairs where the first
    /// sample is larger (ties count one half). The two-sided p-value uses the
    /// normal approximation with tie-corrected variance and a 0.5 continuity
    /// correction; it is 1 when every value is identical.
    inline RankSumResult ranksum(std::span<const double> a, std::span<const double> b)
    {
        if (a.size() < 2 || b.size() < 2)
            throw InvalidInput("ranksum needs at least two values per sample");
        const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;

        std::vector<std::pair<double, int>> pooled;
        pooled.reserve(n);
        for (double v : a)
            pooled.emplace_back(v, 0);
        for (double v : b)
            pooled.emplace_back(v, 1);
        std::sort(pooled.begin(), pooled.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

        double rank_sum_a = 0., tie_term = 0.;
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j < n && pooled[j].first == pooled[i].first)
                ++j;
            const double midrank = 0.5 * static_cast<double>(i + 1 + j);
            const double t = static_cast<double>(j - i);
            tie_term += t * t * t - t;
            for (std::size_t k = i; k < j; ++k)
                if (pooled[k].second == 0)
                    rank_sum_a += midrank;
            i = j;
        }

        const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2), dn = static_cast<double>(n);
        RankSumResult r;
        r.u = rank_sum_a - dn1 * (dn1 + 1.) / 2.;
        const double mean = dn1 * dn2 / 2.;
        const double var = dn1 * dn2 / 12. * ((dn + 1.) - tie_term / (dn * (dn - 1.)));
        if (!(var > 0.)) {
            r.p_value = 1.;
            return r;
        }
        const double z = std::max(std::abs(r.u - mean) - 0.5, 0.) / std::sqrt(var);
        r.p_value = std::min(1., std::erfc(z / std::sqrt(2.)));
        return r;
    }

    /// Linear-interpolation quantile (q in [0,1]) of an unsorted sample.
    inline double quantile(std::vector<double> v, double q)
    {
        if (v.empty())
            throw InvalidInput("quantile of an empty sample");
        std::sort(v.begin(), v.end());
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    }

    inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

} // namespace aprol
