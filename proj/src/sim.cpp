#include "dlif/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace dlif {

double FengAIF::eval(double t) const {
    const double tau = t - t_delay;
    if (tau <= 0.0) return 0.0;
    return (A1 * tau - A2 - A3) * std::exp(-l1 * tau) + A2 * std::exp(-l2 * tau) +
           A3 * std::exp(-l3 * tau);
}

std::string cohort_name(Cohort c) { return c == Cohort::HAB ? "HAB" : "MAB"; }

Cohort cohort_from_name(const std::string& name) {
    if (name == "HAB") return Cohort::HAB;
    if (name == "MAB") return Cohort::MAB;
    throw std::invalid_argument("unknown cohort: " + name);
}

double FineCurve::at_time(double t) const {
    if (t <= 0.0) return v.front();
    const double idx = t / dt;
    const auto lo = static_cast<std::size_t>(idx);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = idx - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

FineCurve gen_aif_fine(const FengAIF& p, double fine_dt, double total_min) {
    if (fine_dt > 0.01 || fine_dt <= 0.0)
        throw std::invalid_argument("gen_aif_fine: fine_dt must be in (0, 0.01] min");
    FineCurve out;
    out.dt = fine_dt;
    const auto n = static_cast<std::size_t>(std::ceil(total_min / fine_dt)) + 1;
    out.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double val = p.eval(static_cast<double>(i) * fine_dt);
        if (val < 0.0)
            throw std::runtime_error("gen_aif_fine: curve negative at t=" +
                                     std::to_string(static_cast<double>(i) * fine_dt));
        out.v[i] = val;
    }
    return out;
}

SampledCurve sample_fine(const FineCurve& fine, const TimeGrid& grid) {
    std::vector<double> vals(static_cast<std::size_t>(grid.frames()));
    for (int i = 0; i < grid.frames(); ++i) vals[i] = fine.at_time(grid.midpoint(i));
    return SampledCurve(grid, std::move(vals));
}

FineCurve tissue_tac_fine(const FineCurve& cp, double K1, double k2) {
    if (k2 <= 0.0) throw std::invalid_argument("tissue_tac: k2 must be positive");
    FineCurve out;
    out.dt = cp.dt;
    out.v.assign(cp.v.size(), 0.0);
    const double dt = cp.dt;
    const double E = std::exp(-k2 * dt);
    const double I0 = (1.0 - E) / k2;        // int_0^dt e^{-k2 (dt-s)} ds
    const double I1 = (dt - I0) / k2;        // int_0^dt s e^{-k2 (dt-s)} ds
    for (std::size_t i = 0; i + 1 < cp.v.size(); ++i) {
        const double a = cp.v[i];
        const double b = (cp.v[i + 1] - cp.v[i]) / dt;
        out.v[i + 1] = out.v[i] * E + K1 * (a * I0 + b * I1);
    }
    return out;
}

SampledCurve tissue_tac(const FineCurve& cp, double K1, double k2, const TimeGrid& grid) {
    return sample_fine(tissue_tac_fine(cp, K1, k2), grid);
}

FineCurve metabolite_remainder(const FineCurve& cp, double k_met) {
    if (k_met < 0.0) throw std::invalid_argument("metabolite_remainder: k_met must be >= 0");
    FineCurve out;
    out.dt = cp.dt;
    out.v.resize(cp.v.size());
    constexpr double kPfFloor = 1e-3;
    constexpr double kRatioCap = (1.0 - kPfFloor) / kPfFloor;
    for (std::size_t i = 0; i < cp.v.size(); ++i) {
        const double t = static_cast<double>(i) * cp.dt;
        const double pf = std::exp(-k_met * t);
        const double ratio = pf < kPfFloor ? kRatioCap : (1.0 - pf) / pf;
        out.v[i] = cp.v[i] * ratio;
    }
    return out;
}

DynamicVolume downsample4(const DynamicVolume& vol) {
    if (vol.H % 4 || vol.W % 4 || vol.L % 4)
        throw std::invalid_argument("downsample4: dims " + std::to_string(vol.H) + "x" +
                                    std::to_string(vol.W) + "x" + std::to_string(vol.L) +
                                    " not divisible by 4");
    DynamicVolume out;
    out.grid = vol.grid;
    out.H = vol.H / 4;
    out.W = vol.W / 4;
    out.L = vol.L / 4;
    out.voxel_mm = vol.voxel_mm * 4.0;
    out.seed = vol.seed;
    out.data.assign(static_cast<std::size_t>(out.size()), 0.0);
    const int T = vol.grid.frames();
    for (int t = 0; t < T; ++t)
        for (int z = 0; z < out.H; ++z)
            for (int y = 0; y < out.W; ++y)
                for (int x = 0; x < out.L; ++x) {
                    double acc = 0.0;
                    for (int dz = 0; dz < 4; ++dz)
                        for (int dy = 0; dy < 4; ++dy)
                            for (int dx = 0; dx < 4; ++dx)
                                acc += vol.at(t, 4 * z + dz, 4 * y + dy, 4 * x + dx);
                    out.at(t, z, y, x) = acc / 64.0;
                }
    if (!vol.mask.empty()) {
        out.mask.assign(static_cast<std::size_t>(out.voxels()), 0);
        for (int z = 0; z < out.H; ++z)
            for (int y = 0; y < out.W; ++y)
                for (int x = 0; x < out.L; ++x) {
                    int inside = 0;
                    for (int dz = 0; dz < 4; ++dz)
                        for (int dy = 0; dy < 4; ++dy)
                            for (int dx = 0; dx < 4; ++dx)
                                inside += vol.mask[(static_cast<std::size_t>(4 * z + dz) * vol.W +
                                                    (4 * y + dy)) * vol.L + (4 * x + dx)];
                    out.mask[(static_cast<std::size_t>(z) * out.W + y) * out.L + x] =
                        inside >= 32 ? 1 : 0;
                }
    }
    return out;
}

bool Region::contains(double z, double y, double x) const {
    const double dz = (z - cz) / rz;
    const double dy = (y - cy) / ry;
    const double dx = (x - cx) / rx;
    return dz * dz + dy * dy + dx * dx <= 1.0;
}

namespace {

FengAIF draw_feng(Rng& rng, const SimConfig& cfg, Cohort cohort) {
    const double amp = cohort == Cohort::MAB ? cfg.mab_amplitude_scale : 1.0;
    FengAIF p;
    p.A1 = cfg.A1.draw(rng) * amp;
    p.A2 = cfg.A2.draw(rng) * amp;
    p.A3 = cfg.A3.draw(rng) * amp;
    p.l1 = cfg.l1.draw(rng);
    p.l2 = cfg.l2.draw(rng);
    p.l3 = cfg.l3.draw(rng);
    p.t_delay = cfg.t_delay.draw(rng);
    return p;
}

KineticParams draw_kinetics(Rng& rng, const SimConfig& cfg, Cohort cohort, double k_met,
                            bool vessel) {
    KineticParams k;
    k.K1 = cfg.K1.draw(rng);
    k.k2 = cfg.k2.draw(rng);
    k.f_b = vessel ? cfg.f_b_vessel.draw(rng) : cfg.f_b_tissue.draw(rng);
    k.alpha = cfg.alpha.draw(rng);
    k.k_met = k_met;
    k.cohort = cohort;
    return k;
}

}  // namespace

Subject make_subject(const SimConfig& cfg, std::uint64_t master_seed, int index) {
    if (cfg.dims % 4)
        throw std::invalid_argument("make_subject: dims must be divisible by 4");
    Subject s;
    s.seed = mix_seed(master_seed, static_cast<std::uint64_t>(index));
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "subject_%03d", index);
        s.id = buf;
    }
    s.cohort = (index % 2 == 0) ? Cohort::HAB : Cohort::MAB;

    Rng rng(s.seed);

    // plasma input; resample until nonnegative everywhere (ranges make
    // rejection rare, but Feng's early dip can cross zero)
    FineCurve cp_fine;
    for (int attempt = 0;; ++attempt) {
        s.feng = draw_feng(rng, cfg, s.cohort);
        try {
            cp_fine = gen_aif_fine(s.feng, cfg.fine_dt, cfg.grid.total_minutes());
            break;
        } catch (const std::runtime_error&) {
            if (attempt >= 100)
                throw std::runtime_error("make_subject: could not draw a nonnegative AIF");
        }
    }
    s.aif = sample_fine(cp_fine, cfg.grid);
    s.k_met = cfg.k_met.draw(rng);

    const int n = cfg.dims;
    const double c = (n - 1) / 2.0;

    // region 0: background tissue filling the brain ellipsoid
    s.regions.push_back(
        Region{c, c, c, 0.45 * n, 0.45 * n, 0.42 * n, draw_kinetics(rng, cfg, s.cohort, s.k_met, false)});
    const auto n_tissue = static_cast<int>(rng.uniform_int(2, 5));
    for (int r = 0; r < n_tissue; ++r) {
        Region reg;
        reg.cz = c + rng.uniform(-0.22, 0.22) * n;
        reg.cy = c + rng.uniform(-0.22, 0.22) * n;
        reg.cx = c + rng.uniform(-0.22, 0.22) * n;
        reg.rz = rng.uniform(0.08, 0.2) * n;
        reg.ry = rng.uniform(0.08, 0.2) * n;
        reg.rx = rng.uniform(0.08, 0.2) * n;
        reg.kin = draw_kinetics(rng, cfg, s.cohort, s.k_met, false);
        s.regions.push_back(reg);
    }
    // vessel: small, painted last so it wins overlaps
    {
        Region v;
        v.cz = c + rng.uniform(-0.15, 0.15) * n;
        v.cy = c + rng.uniform(-0.15, 0.15) * n;
        v.cx = c + rng.uniform(-0.15, 0.15) * n;
        v.rz = rng.uniform(0.05, 0.09) * n;
        v.ry = rng.uniform(0.04, 0.07) * n;
        v.rx = rng.uniform(0.04, 0.07) * n;
        v.kin = draw_kinetics(rng, cfg, s.cohort, s.k_met, true);
        s.regions.push_back(v);
    }

    const Region brain{c, c, c, 0.45 * n, 0.45 * n, 0.42 * n, KineticParams{}};
    s.region_map.assign(static_cast<std::size_t>(n) * n * n, -1);
    std::size_t vox = 0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x, ++vox) {
                if (!brain.contains(z, y, x)) continue;
                int label = 0;
                for (std::size_t r = 1; r < s.regions.size(); ++r)
                    if (s.regions[r].contains(z, y, x)) label = static_cast<int>(r);
                s.region_map[vox] = label;
            }

    // per-region frame-midpoint curves
    const int T = cfg.grid.frames();
    const SampledCurve cr = sample_fine(metabolite_remainder(cp_fine, s.k_met), cfg.grid);
    std::vector<std::vector<double>> mix(s.regions.size());
    for (std::size_t r = 0; r < s.regions.size(); ++r) {
        const auto& k = s.regions[r].kin;
        const SampledCurve ct = tissue_tac(cp_fine, k.K1, k.k2, cfg.grid);
        mix[r].resize(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t)
            mix[r][t] = k.f_b * (k.alpha * s.aif.values[t] + k.beta() * cr.values[t]) +
                        k.f_t() * ct.values[t];
    }

    DynamicVolume& vol = s.volume;
    vol.grid = cfg.grid;
    vol.H = vol.W = vol.L = n;
    vol.voxel_mm = cfg.voxel_mm;
    vol.seed = s.seed;
    vol.data.assign(static_cast<std::size_t>(vol.size()), 0.0);
    vol.mask.assign(s.region_map.size(), 0);
    for (std::size_t i = 0; i < s.region_map.size(); ++i) vol.mask[i] = s.region_map[i] >= 0;

    const std::size_t nvox = s.region_map.size();
    for (int t = 0; t < T; ++t) {
        double* frame = vol.data.data() + static_cast<std::size_t>(t) * nvox;
        for (std::size_t q = 0; q < nvox; ++q) {
            const int r = s.region_map[q];
            frame[q] = r >= 0 ? mix[static_cast<std::size_t>(r)][t] : 0.0;
        }
    }
    if (cfg.noise_sigma0 > 0.0) {
        for (int t = 0; t < T; ++t) {
            const double sigma = cfg.noise_sigma0 / std::sqrt(cfg.grid.duration(t));
            const double floor = -5.0 * sigma;
            double* frame = vol.data.data() + static_cast<std::size_t>(t) * nvox;
            for (std::size_t q = 0; q < nvox; ++q)
                frame[q] = std::max(frame[q] + sigma * rng.normal(), floor);
        }
    }
    return s;
}

std::vector<double> region_mixture_curve(const SimConfig& cfg, const Subject& s, int region) {
    const auto& k = s.regions.at(static_cast<std::size_t>(region)).kin;
    const FineCurve cp_fine = gen_aif_fine(s.feng, cfg.fine_dt, cfg.grid.total_minutes());
    const SampledCurve cp = sample_fine(cp_fine, cfg.grid);
    const SampledCurve cr = sample_fine(metabolite_remainder(cp_fine, s.k_met), cfg.grid);
    const SampledCurve ct = tissue_tac(cp_fine, k.K1, k.k2, cfg.grid);
    std::vector<double> out(static_cast<std::size_t>(cfg.grid.frames()));
    for (int t = 0; t < cfg.grid.frames(); ++t)
        out[static_cast<std::size_t>(t)] =
            k.f_b * (k.alpha * cp.values[t] + k.beta() * cr.values[t]) + k.f_t() * ct.values[t];
    return out;
}

std::vector<double> reference_vt_map(const Subject& s) {
    std::vector<double> out(s.region_map.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < s.region_map.size(); ++i)
        if (s.region_map[i] >= 0) out[i] = s.regions[static_cast<std::size_t>(s.region_map[i])].kin.vt();
    return out;
}

}  // namespace dlif
