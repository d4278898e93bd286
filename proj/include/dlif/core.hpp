#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlif {

/// Frame start/end times in minutes. All curves and volumes in the toolkit
/// share one of these; frame i covers [starts[i], ends[i]).
struct TimeGrid {
    std::vector<double> starts;
    std::vector<double> ends;

    int frames() const { return static_cast<int>(starts.size()); }
    double midpoint(int i) const { return 0.5 * (starts[i] + ends[i]); }
    double duration(int i) const { return ends[i] - starts[i]; }
    double total_minutes() const { return ends.empty() ? 0.0 : ends.back(); }

    std::vector<double> midpoints() const {
        std::vector<double> m(starts.size());
        for (int i = 0; i < frames(); ++i) m[i] = midpoint(i);
        return m;
    }

    /// starts[0]=0, contiguous frames, positive durations
    void validate() const;

    /// The default acquisition grid: 30 contiguous frames covering 90 min,
    /// short early frames to catch the peak (6x0.5, 6x1, 6x2, 6x5, 6x6.5).
    static TimeGrid default_30x90();

    bool operator==(const TimeGrid& o) const = default;
};

/// A nonnegative time-activity curve sampled at the frames of a TimeGrid.
struct SampledCurve {
    TimeGrid grid;
    std::vector<double> values;

    SampledCurve() = default;
    SampledCurve(TimeGrid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
        if (static_cast<int>(values.size()) != grid.frames())
            throw std::invalid_argument("SampledCurve: values/grid length mismatch");
    }

    int frames() const { return grid.frames(); }
    double peak() const;
    int peak_frame() const;
};

void require_same_grid(const SampledCurve& a, const SampledCurve& b, const char* op);

/// T x H x W x L activity tensor in SUV units, t-major then z,y,x.
/// H counts z-planes, W counts y-rows, L counts x-columns.
struct DynamicVolume {
    TimeGrid grid;
    int H = 0, W = 0, L = 0;
    double voxel_mm = 1.0;
    std::optional<std::uint64_t> seed;
    std::vector<double> data;        // grid.frames()*H*W*L
    std::vector<std::uint8_t> mask;  // optional brain mask, H*W*L (empty = none)

    std::int64_t voxels() const { return static_cast<std::int64_t>(H) * W * L; }
    std::int64_t size() const { return voxels() * grid.frames(); }

    std::int64_t flat(int t, int z, int y, int x) const {
        return ((static_cast<std::int64_t>(t) * H + z) * W + y) * L + x;
    }
    double& at(int t, int z, int y, int x) { return data[flat(t, z, y, x)]; }
    double at(int t, int z, int y, int x) const { return data[flat(t, z, y, x)]; }

    /// time course of one voxel
    std::vector<double> tac(std::int64_t voxel) const {
        std::vector<double> out(grid.frames());
        const std::int64_t v = voxels();
        for (int t = 0; t < grid.frames(); ++t) out[t] = data[t * v + voxel];
        return out;
    }
};

}  // namespace dlif
