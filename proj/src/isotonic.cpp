#include "regaudit/isotonic.hpp"

#include <algorithm>

namespace regaudit {

std::vector<double> isotonic_fit(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<double> block_mean;
    std::vector<std::size_t> block_size;
    block_mean.reserve(n);
    block_size.reserve(n);

    for (std::size_t i = 0; i < n; ++i) {
        block_mean.push_back(values[i]);
        block_size.push_back(1);
        // Merge backwards while the trailing pair violates monotonicity.
        while (block_mean.size() > 1 &&
               block_mean[block_mean.size() - 2] > block_mean.back()) {
            const double m2 = block_mean.back();
            const double s2 = static_cast<double>(block_size.back());
            block_mean.pop_back();
            block_size.pop_back();
            const double s1 = static_cast<double>(block_size.back());
            block_mean.back() = (s1 * block_mean.back() + s2 * m2) / (s1 + s2);
            block_size.back() += static_cast<std::size_t>(s2);
        }
    }

    std::vector<double> out;
    out.reserve(n);
    for (std::size_t b = 0; b < block_mean.size(); ++b)
        out.insert(out.end(), block_size[b], block_mean[b]);
    return out;
}

std::vector<double> isotonic_project(const std::vector<double>& values, double anchor) {
    std::vector<double> fit = isotonic_fit(values);
    for (double& v : fit) v = std::max(v, anchor);
    return fit;
}

}  // namespace regaudit
