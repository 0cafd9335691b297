#include "grrhdr/simulate.hpp"

#include <cmath>

namespace grrhdr {

void AcquisitionSpec::validate(int scene_width, int scene_height) const {
    if (scene_width <= 0 || scene_height <= 0)
        throw param_error("scene dimensions must be positive");
    sensor.validate();
    if (shutter.t0 <= 0.0 || shutter.tr < 0.0)
        throw param_error("invalid shutter profile");
    if (shutter.rows != scene_height)
        throw param_error("shutter row count does not match the scene height");
    if (optics.size != static_cast<uint64_t>(scene_width) * scene_height)
        throw param_error("optics size does not match the scene grid");
    optics.validate();
    if (low_threshold < 0 || low_threshold >= sensor.max_dn())
        throw param_error("low threshold must lie in [0, max DN)");
}

static void fill_erasure(Measurement& m, int low_threshold,
                         bool erase_underexposed) {
    const uint16_t cap = static_cast<uint16_t>(m.max_dn());
    m.erasure.assign(m.dn.size(), 1);
    for (size_t i = 0; i < m.dn.size(); ++i) {
        if (m.dn[i] == cap) m.erasure[i] = 0;
        else if (erase_underexposed && m.dn[i] <= low_threshold) m.erasure[i] = 0;
    }
}

Measurement forward_with_exposures(const RadianceImage& scene,
                                   const std::vector<double>& exposures,
                                   const SensorConfig& sensor,
                                   int low_threshold, bool erase_underexposed) {
    scene.validate();
    if (scene.channels != 1)
        throw param_error("monochrome forward model expects a 1-channel scene");
    if (exposures.size() != scene.pixel_count())
        throw param_error("exposure grid size does not match the scene");
    sensor.validate();
    std::vector<double> energy(scene.data.size());
    // The association (gain * exposure) * value is kept identical in every
    // simulation path so permuted and conjugated captures agree bit for bit.
    for (size_t i = 0; i < energy.size(); ++i)
        energy[i] = (sensor.gain * exposures[i]) * scene.data[i];
    Measurement m;
    m.width = scene.width;
    m.height = scene.height;
    m.bit_depth = sensor.bit_depth;
    m.dn = quantize_frame(energy, sensor);
    fill_erasure(m, low_threshold, erase_underexposed);
    return m;
}

Measurement forward(const RadianceImage& scene, const AcquisitionSpec& spec) {
    scene.validate();
    spec.validate(scene.width, scene.height);
    RadianceImage shuffled = scene;
    shuffled.data = apply_permutation(scene.data, spec.optics, Direction::Forward);
    std::vector<double> exposures(scene.pixel_count());
    for (size_t i = 0; i < exposures.size(); ++i)
        exposures[i] = spec.shutter.exposure_row(static_cast<int>(i) / scene.width);
    return forward_with_exposures(shuffled, exposures, spec.sensor,
                                  spec.low_threshold, spec.erase_underexposed);
}

Measurement unshuffle(const Measurement& m, const PermutationMap& map) {
    m.validate();
    if (map.size != m.pixel_count())
        throw param_error("permutation size does not match the measurement");
    Measurement out = m;
    out.dn = apply_permutation(m.dn, map, Direction::Inverse);
    if (!m.erasure.empty())
        out.erasure = apply_permutation(m.erasure, map, Direction::Inverse);
    return out;
}

double saturation_rate(const Measurement& m) {
    if (m.dn.empty()) return 0.0;
    const uint16_t cap = static_cast<uint16_t>(m.max_dn());
    size_t hits = 0;
    for (uint16_t v : m.dn) hits += (v == cap);
    return static_cast<double>(hits) / static_cast<double>(m.dn.size());
}

double underexposure_rate(const Measurement& m, int low_threshold) {
    if (m.dn.empty()) return 0.0;
    size_t hits = 0;
    for (uint16_t v : m.dn) hits += (v <= low_threshold);
    return static_cast<double>(hits) / static_cast<double>(m.dn.size());
}

namespace {

struct KnobEval {
    const RadianceImage* scene;
    const AcquisitionSpec* spec;
    SaturationKnob knob;

    // Noiseless saturation rate at knob value v.
    double rate(double v) const {
        AcquisitionSpec s = *spec;
        s.sensor.noise_sigma = 0.0;
        RadianceImage sc = *scene;
        if (knob == SaturationKnob::SceneScale) {
            for (double& x : sc.data) x *= v;
        } else {
            s.shutter.t0 = v;
        }
        return saturation_rate(forward(sc, s));
    }

    AcquisitionSpec apply(double v, double* scale) const {
        AcquisitionSpec s = *spec;
        if (knob == SaturationKnob::SceneScale) *scale = v;
        else s.shutter.t0 = v;
        return s;
    }
};

}  // namespace

SaturationSearch calibrate_exposure_for_saturation(const RadianceImage& scene,
                                                   const AcquisitionSpec& spec,
                                                   double target,
                                                   SaturationKnob knob) {
    scene.validate();
    spec.validate(scene.width, scene.height);
    if (!(target > 0.0) || !(target < 1.0))
        throw param_error("saturation target must lie in (0, 1)");

    const KnobEval eval{&scene, &spec, knob};
    const double tol = 0.1 * target;
    const double n = static_cast<double>(scene.pixel_count());
    auto within = [&](double r) { return std::fabs(r - target) <= tol; };

    double v = (knob == SaturationKnob::SceneScale) ? 1.0 : spec.shutter.t0;
    double r = eval.rate(v);
    double lo = v, rlo = r, hi = v, rhi = r;
    bool bracketed = within(r);

    if (!bracketed && r < target) {
        for (int i = 0; i < 80 && rhi < target; ++i) {
            hi *= 2.0;
            rhi = eval.rate(hi);
        }
        bracketed = rhi >= target;
        if (!bracketed) { lo = hi; rlo = rhi; }  // even the top of the range undershoots
    } else if (!bracketed) {
        for (int i = 0; i < 80 && rlo > target; ++i) {
            lo *= 0.5;
            rlo = eval.rate(lo);
        }
        bracketed = rlo <= target;
        if (!bracketed) { hi = lo; rhi = rlo; }  // saturation floor above the target
    }

    double best_v = v, best_r = r;
    bool attained = within(r);
    if (bracketed && !attained) {
        for (int i = 0; i < 200; ++i) {
            const double mid = std::sqrt(lo * hi);
            const double rm = eval.rate(mid);
            if (within(rm)) {
                best_v = mid; best_r = rm; attained = true;
                break;
            }
            if (rm < target) { lo = mid; rlo = rm; }
            else { hi = mid; rhi = rm; }
        }
        if (!attained) {
            // The rate jumped across the target window. Prefer the closer
            // side; a zero rate against a sub-pixel target still counts.
            if (std::fabs(rlo - target) <= std::fabs(rhi - target)) {
                best_v = lo; best_r = rlo;
            } else {
                best_v = hi; best_r = rhi;
            }
            if (best_r == 0.0 && target < 1.0 / n) attained = true;
        }
    } else if (!bracketed) {
        best_v = lo; best_r = rlo;
    }

    SaturationSearch result;
    result.scene_scale = 1.0;
    result.spec = eval.apply(best_v, &result.scene_scale);
    result.achieved = best_r;
    result.attained = attained;
    RadianceImage scaled = scene;
    if (result.scene_scale != 1.0)
        for (double& x : scaled.data) x *= result.scene_scale;
    result.measurement = forward(scaled, result.spec);
    return result;
}

}  // namespace grrhdr
