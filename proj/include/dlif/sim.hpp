#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlif/core.hpp"
#include "dlif/rng.hpp"

namespace dlif {

/// Tri-exponential plasma input with injection delay:
///   c_p(t) = (A1 (t-td) - A2 - A3) e^{-l1 (t-td)} + A2 e^{-l2 (t-td)} + A3 e^{-l3 (t-td)}
/// for t > td, 0 otherwise.
struct FengAIF {
    double A1 = 0.0;  // SUV/min
    double A2 = 0.0;  // SUV
    double A3 = 0.0;  // SUV
    double l1 = 1.0;  // 1/min
    double l2 = 0.1;  // 1/min
    double l3 = 0.01; // 1/min
    double t_delay = 0.0;  // min

    double eval(double t) const;
};

enum class Cohort { HAB, MAB };
std::string cohort_name(Cohort c);
Cohort cohort_from_name(const std::string& name);

/// One-tissue kinetics plus the blood mixture factors of a voxel class.
struct KineticParams {
    double K1 = 0.1;    // 1/min
    double k2 = 0.05;   // 1/min
    double f_b = 0.05;  // whole-blood fraction in [0,1]
    double alpha = 0.6; // plasma fraction of blood signal
    double k_met = 0.01;// metabolite conversion rate, 1/min
    Cohort cohort = Cohort::HAB;

    double beta() const { return 1.0 - alpha; }
    double f_t() const { return 1.0 - f_b; }
    double vt() const { return K1 / k2; }
};

/// Uniformly sampled curve on [0, n*dt], used for quadrature-accurate kinetics.
struct FineCurve {
    double dt = 0.005;
    std::vector<double> v;

    double total_minutes() const { return dt * static_cast<double>(v.size() - 1); }
    /// linear interpolation, clamped to the endpoints
    double at_time(double t) const;
};

struct Range {
    double lo = 0.0, hi = 1.0;
    double draw(Rng& rng) const { return rng.uniform(lo, hi); }
};

/// All simulator knobs; defaults give desk-scale 32^3 subjects with V_T in a
/// plausible 1..10 range and SUV-scale activities.
struct SimConfig {
    int dims = 32;            // cubic volumes, must be divisible by 4
    double voxel_mm = 2.0;
    double fine_dt = 0.005;   // min; must be <= 0.01
    double noise_sigma0 = 0.05;  // SUV at a 1-minute frame
    TimeGrid grid = TimeGrid::default_30x90();

    Range A1{15.0, 50.0};
    Range A2{0.3, 1.0};
    Range A3{0.15, 0.5};
    Range l1{3.0, 6.0};
    Range l2{0.05, 0.2};
    Range l3{0.005, 0.02};
    Range t_delay{0.2, 1.0};

    Range K1{0.05, 0.3};
    Range k2{0.02, 0.15};
    Range f_b_tissue{0.02, 0.08};
    Range f_b_vessel{0.6, 0.9};
    Range alpha{0.5, 0.8};
    Range k_met{0.005, 0.03};

    double mab_amplitude_scale = 0.7;  // HAB draws x1.0
};

struct Region {
    double cx, cy, cz;  // voxel coordinates (z,y,x order matches volume axes)
    double rx, ry, rz;  // semi-axes in voxels
    KineticParams kin;

    bool contains(double z, double y, double x) const;
};

/// Everything known about a synthetic subject, ground truth included.
struct Subject {
    std::string id;
    std::uint64_t seed = 0;
    Cohort cohort = Cohort::HAB;
    FengAIF feng;
    double k_met = 0.01;
    std::vector<Region> regions;   // [0] background tissue ... back() vessel
    std::vector<int> region_map;   // per voxel, -1 outside brain
    DynamicVolume volume;          // full-resolution, noisy, brain mask set
    SampledCurve aif;              // ground-truth c_p at frame midpoints
};

/// Continuous Feng curve on a fine grid covering the full scan; rejects
/// parameter sets that go negative anywhere on the grid.
FineCurve gen_aif_fine(const FengAIF& p, double fine_dt, double total_min);

/// frame-midpoint samples of a fine curve
SampledCurve sample_fine(const FineCurve& fine, const TimeGrid& grid);

/// c_t(t) = K1 * int_0^t c_p(tau) e^{-k2 (t-tau)} dtau via the exact
/// exponential-update recursion for piecewise-linear c_p.
FineCurve tissue_tac_fine(const FineCurve& cp, double K1, double k2);
SampledCurve tissue_tac(const FineCurve& cp, double K1, double k2, const TimeGrid& grid);

/// Remainder-of-blood activity from a monotone parent fraction pf(t)=e^{-k_met t}:
/// c_r(t) = c_p(t) (1-pf)/pf, with the ratio clamped where pf < 1e-3.
FineCurve metabolite_remainder(const FineCurve& cp, double k_met);

/// 4x4x4 mean pooling per frame; mask (if any) downsampled by majority.
DynamicVolume downsample4(const DynamicVolume& vol);

/// Deterministic subject factory; subject seed = mix(master_seed, index),
/// cohort alternates HAB/MAB with index parity.
Subject make_subject(const SimConfig& cfg, std::uint64_t master_seed, int index);

/// Noise-free frame-midpoint mixture curve of one region class (the voxel
/// model every in-region voxel follows before noise).
std::vector<double> region_mixture_curve(const SimConfig& cfg, const Subject& s, int region);

/// Ground-truth V_T per voxel (K1/k2 of its region), NaN outside the brain.
std::vector<double> reference_vt_map(const Subject& s);

}  // namespace dlif
