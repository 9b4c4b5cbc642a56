#pragma once

// Independent reference computations used by the tests.

#include <algorithm>
#include <numeric>
#include <vector>

#include "gms/domain.hpp"

namespace gms::test {

/// Brute-force scheduling oracle for a serial line: every part needs each
/// operation i once, performed by some individual asset of type i (any
/// station). Work is split into lots of g parts, g = gcd of the rates, and
/// an asset of rate r finishes r / g lots per hour. For N = 0, 1, ... every
/// assignment of the N lots of each operation to individual assets is
/// enumerated; the largest N with a load-feasible assignment for every
/// operation gives N * g parts/hour, then clipped and binned like capacity().
class ScheduleOracle {
public:
    ScheduleOracle(const Configuration& config, std::vector<double> rates)
        : config_(config), rates_(std::move(rates)) {}

    int capacity() {
        int g = 0;
        for (double r : rates_) g = std::gcd(g, static_cast<int>(r));
        if (g == 0) return 0;
        // Nothing above the clip can change the binned answer.
        const int max_lots = kCapacityMax / g + 1;
        int best = 0;
        for (int n = 1; n <= max_lots; ++n) {
            bool all = true;
            for (int i = 0; i < config_.types() && all; ++i) all = feasible(i, n, g);
            if (!all) break;
            best = n;
        }
        const int parts = std::min(best * g, kCapacityMax);
        return parts / kCapacityStep * kCapacityStep;
    }

    long assignments_tried() const noexcept { return tried_; }

private:
    bool feasible(int op, int lots, int g) {
        std::vector<int> limit;
        for (int j = 0; j < config_.stations(); ++j) {
            for (int u = 0; u < config_.at(op, j); ++u) limit.push_back(static_cast<int>(rates_[op]) / g);
        }
        std::vector<int> load(limit.size(), 0);
        return assign(0, lots, limit, load);
    }

    // Places lot `k` on each asset in turn; plain exhaustive search.
    bool assign(int k, int lots, const std::vector<int>& limit, std::vector<int>& load) {
        if (k == lots) return true;
        for (std::size_t a = 0; a < limit.size(); ++a) {
            ++tried_;
            if (load[a] + 1 > limit[a]) continue;
            ++load[a];
            const bool ok = assign(k + 1, lots, limit, load);
            --load[a];
            if (ok) return true;
        }
        return false;
    }

    Configuration config_;
    std::vector<double> rates_;
    long tried_ = 0;
};

/// Every configuration of a types x stations grid with cells in [0, c_max].
inline std::vector<Configuration> all_configurations(int types, int stations, int c_max) {
    const int cells = types * stations;
    std::vector<Configuration> out;
    std::vector<int> counts(static_cast<std::size_t>(cells), 0);
    while (true) {
        out.emplace_back(types, stations, counts);
        int k = 0;
        while (k < cells && counts[static_cast<std::size_t>(k)] == c_max) counts[static_cast<std::size_t>(k++)] = 0;
        if (k == cells) break;
        ++counts[static_cast<std::size_t>(k)];
    }
    return out;
}

}  // namespace gms::test
