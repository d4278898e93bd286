#include "dlif/core.hpp"

#include <algorithm>
#include <cmath>

namespace dlif {

void TimeGrid::validate() const {
    if (starts.empty() || starts.size() != ends.size())
        throw std::invalid_argument("TimeGrid: empty or mismatched start/end lists");
    if (starts[0] != 0.0)
        throw std::invalid_argument("TimeGrid: first frame must start at 0");
    for (std::size_t i = 0; i < starts.size(); ++i) {
        if (!(ends[i] > starts[i]))
            throw std::invalid_argument("TimeGrid: frame " + std::to_string(i) +
                                        " has nonpositive duration");
        if (i + 1 < starts.size() && starts[i + 1] != ends[i])
            throw std::invalid_argument("TimeGrid: gap between frames " + std::to_string(i) +
                                        " and " + std::to_string(i + 1));
    }
}

TimeGrid TimeGrid::default_30x90() {
    static const double durations[] = {0.5, 1.0, 2.0, 5.0, 6.5};
    TimeGrid g;
    double t = 0.0;
    for (double d : durations) {
        for (int i = 0; i < 6; ++i) {
            g.starts.push_back(t);
            g.ends.push_back(t + d);
            t += d;
        }
    }
    return g;
}

double SampledCurve::peak() const {
    return *std::max_element(values.begin(), values.end());
}

int SampledCurve::peak_frame() const {
    return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

void require_same_grid(const SampledCurve& a, const SampledCurve& b, const char* op) {
    if (!(a.grid == b.grid))
        throw std::invalid_argument(std::string(op) + ": curves live on different time grids");
}

}  // namespace dlif
