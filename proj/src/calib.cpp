#include "grrhdr/calib.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace grrhdr {

void ExposureStack::canonicalize() {
    if (exposures.size() != frames.size())
        throw param_error("stack exposure/frame count mismatch");
    std::vector<size_t> order(exposures.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return exposures[a] < exposures[b]; });
    std::vector<double> t;
    std::vector<Measurement> f;
    t.reserve(order.size());
    f.reserve(order.size());
    for (size_t i : order) {
        t.push_back(exposures[i]);
        f.push_back(std::move(frames[i]));
    }
    exposures = std::move(t);
    frames = std::move(f);
    for (size_t i = 1; i < exposures.size(); ++i)
        if (exposures[i] == exposures[i - 1])
            throw param_error("stack has duplicate exposure times");
}

void ExposureStack::validate() const {
    if (frames.empty())
        throw param_error("exposure stack is empty");
    if (exposures.size() != frames.size())
        throw param_error("stack exposure/frame count mismatch");
    for (double t : exposures)
        if (!std::isfinite(t) || t <= 0.0)
            throw param_error("stack exposures must be positive");
    for (size_t i = 1; i < exposures.size(); ++i)
        if (exposures[i] <= exposures[i - 1])
            throw param_error("stack exposures must be strictly increasing");
    const Measurement& first = frames.front();
    for (const Measurement& m : frames) {
        m.validate();
        if (m.width != first.width || m.height != first.height ||
            m.bit_depth != first.bit_depth)
            throw param_error("stack frames disagree on geometry or bit depth");
    }
}

void SparseSystemMatrix::validate() const {
    std::vector<uint8_t> invalid(n_sensor, 0);
    for (uint32_t p : invalid_pixels) {
        if (p >= n_sensor)
            throw param_error("invalid pixel index out of range");
        invalid[p] = 1;
    }
    for (const SparseEntry& e : entries) {
        if (e.sensor >= n_sensor || e.scene >= n_scene)
            throw param_error("matrix entry index out of range");
        if (!std::isfinite(e.flux) || e.flux <= 0.0)
            throw param_error("matrix flux values must be positive and finite");
        if (invalid[e.sensor])
            throw param_error("matrix stores an entry at an invalid pixel");
    }
}

FluxEstimate estimate_flux(const ExposureStack& stack, int u, int v,
                           const FluxScreen& screen) {
    stack.validate();
    const Measurement& first = stack.frames.front();
    if (u < 0 || u >= first.height || v < 0 || v >= first.width)
        throw param_error("pixel coordinates outside the frame");
    const size_t idx = static_cast<size_t>(u) * first.width + v;
    const int cap = first.max_dn();

    // Per-frame screening: unsaturated with one DN of guard band, above the
    // dark floor, and not already erased by the capture.
    std::vector<double> t, dn;
    for (size_t l = 0; l < stack.frames.size(); ++l) {
        const Measurement& m = stack.frames[l];
        const int value = m.dn[idx];
        if (value <= screen.valid_low || value > cap - 1) continue;
        if (!m.erasure.empty() && !m.erasure[idx]) continue;
        t.push_back(stack.exposures[l]);
        dn.push_back(static_cast<double>(value));
    }

    FluxEstimate est;
    est.used = static_cast<int>(t.size());
    if (t.size() < 3) return est;

    // Pearson correlation between exposure and response; zero variance or
    // an undefined value rejects the pixel.
    const size_t m = t.size();
    double mt = 0, md = 0;
    for (size_t i = 0; i < m; ++i) { mt += t[i]; md += dn[i]; }
    mt /= m; md /= m;
    double stt = 0, sdd = 0, std_ = 0;
    for (size_t i = 0; i < m; ++i) {
        stt += (t[i] - mt) * (t[i] - mt);
        sdd += (dn[i] - md) * (dn[i] - md);
        std_ += (t[i] - mt) * (dn[i] - md);
    }
    if (stt <= 0.0 || sdd <= 0.0) return est;
    const double corr = std_ / std::sqrt(stt * sdd);
    if (!(corr > screen.min_correlation)) return est;

    double sum = 0.0;
    for (size_t i = 0; i < m; ++i) sum += dn[i] / t[i];
    est.flux = sum / static_cast<double>(m);
    est.valid = est.flux > 0.0;
    return est;
}

SparseSystemMatrix build_matrix(const std::vector<ExposureStack>& stacks,
                                const std::vector<Measurement>& dark_frames,
                                int dark_threshold, const FluxScreen& screen,
                                double sparsity_floor) {
    if (stacks.empty())
        throw param_error("no calibration stacks given");
    for (const ExposureStack& s : stacks) s.validate();
    const Measurement& geom = stacks.front().frames.front();
    const uint32_t n_sensor = static_cast<uint32_t>(geom.pixel_count());

    // Scene coverage must be gapless 0..n_scene-1.
    uint32_t n_scene = 0;
    for (const ExposureStack& s : stacks)
        n_scene = std::max(n_scene, static_cast<uint32_t>(s.source_index) + 1);
    {
        std::vector<uint8_t> covered(n_scene, 0);
        for (const ExposureStack& s : stacks) {
            if (s.source_index < 0)
                throw param_error("negative scene index in calibration stack");
            covered[s.source_index] = 1;
        }
        std::string gaps;
        for (uint32_t k = 0; k < n_scene; ++k)
            if (!covered[k]) gaps += " " + std::to_string(k);
        if (!gaps.empty())
            throw param_error("calibration is missing scene indices:" + gaps);
    }

    // Dark-frame screening.
    std::vector<uint8_t> dark_bad(n_sensor, 0);
    if (!dark_frames.empty()) {
        std::vector<double> mean(n_sensor, 0.0);
        for (const Measurement& d : dark_frames) {
            d.validate();
            if (d.pixel_count() != n_sensor)
                throw param_error("dark frame geometry mismatch");
            for (size_t i = 0; i < n_sensor; ++i) mean[i] += d.dn[i];
        }
        for (size_t i = 0; i < n_sensor; ++i)
            if (mean[i] / dark_frames.size() > dark_threshold) dark_bad[i] = 1;
    }

    SparseSystemMatrix out;
    out.n_sensor = n_sensor;
    out.n_scene = n_scene;
    for (uint32_t i = 0; i < n_sensor; ++i)
        if (dark_bad[i]) out.invalid_pixels.push_back(i);

    for (const ExposureStack& s : stacks) {
        if (s.frames.front().pixel_count() != n_sensor)
            throw param_error("calibration stacks disagree on sensor geometry");
        std::vector<SparseEntry> column;
        double column_max = 0.0;
        for (int u = 0; u < geom.height; ++u) {
            for (int v = 0; v < geom.width; ++v) {
                const uint32_t idx = static_cast<uint32_t>(u) * geom.width + v;
                if (dark_bad[idx]) continue;
                const FluxEstimate est = estimate_flux(s, u, v, screen);
                if (!est.valid) continue;
                column.push_back({idx, static_cast<uint32_t>(s.source_index),
                                  est.flux});
                column_max = std::max(column_max, est.flux);
            }
        }
        for (const SparseEntry& e : column)
            if (e.flux >= sparsity_floor * column_max) out.entries.push_back(e);
    }

    std::sort(out.entries.begin(), out.entries.end(),
              [](const SparseEntry& a, const SparseEntry& b) {
                  return a.scene != b.scene ? a.scene < b.scene
                                            : a.sensor < b.sensor;
              });
    out.validate();
    return out;
}

SparseSystemMatrix matrix_from_permutation(const PermutationMap& map, double gain) {
    map.validate();
    if (!std::isfinite(gain) || gain <= 0.0)
        throw param_error("gain must be positive");
    SparseSystemMatrix out;
    out.n_sensor = map.size;
    out.n_scene = map.size;
    out.entries.reserve(map.size);
    for (uint32_t k = 0; k < map.size; ++k)
        out.entries.push_back({map.forward[k], k, gain});
    std::sort(out.entries.begin(), out.entries.end(),
              [](const SparseEntry& a, const SparseEntry& b) {
                  return a.scene < b.scene;
              });
    return out;
}

int cfa_channel(CfaPhase phase, int r, int c) {
    // Channel layout of the 2x2 cell, positions (0,0),(0,1),(1,0),(1,1).
    static const int layout[4][4] = {
        {0, 1, 1, 2},  // RGGB
        {2, 1, 1, 0},  // BGGR
        {1, 0, 2, 1},  // GRBG
        {1, 2, 0, 1},  // GBRG
    };
    return layout[static_cast<int>(phase)][(r % 2) * 2 + (c % 2)];
}

BayerPlanes bayer_split(const Measurement& mosaic, const ShutterProfile& shutter,
                        const SparseSystemMatrix& matrix, CfaPhase phase) {
    mosaic.validate();
    if (mosaic.width % 2 || mosaic.height % 2)
        throw param_error("bayer split needs even mosaic dimensions");
    if (shutter.rows != mosaic.height)
        throw param_error("shutter row count does not match the mosaic");
    if (matrix.n_sensor != mosaic.pixel_count())
        throw param_error("matrix sensor count does not match the mosaic");
    matrix.validate();

    BayerPlanes out;
    out.phase = phase;
    const int pw = mosaic.width / 2, ph = mosaic.height / 2;
    for (int p = 0; p < 4; ++p) {
        const int pr = p >> 1, pc = p & 1;
        out.channel[p] = cfa_channel(phase, pr, pc);
        Measurement& plane = out.planes[p];
        plane.width = pw;
        plane.height = ph;
        plane.bit_depth = mosaic.bit_depth;
        plane.dn.resize(static_cast<size_t>(pw) * ph);
        if (!mosaic.erasure.empty())
            plane.erasure.resize(plane.dn.size());
        for (int r = 0; r < ph; ++r) {
            for (int c = 0; c < pw; ++c) {
                const size_t src = static_cast<size_t>(2 * r + pr) * mosaic.width
                                   + 2 * c + pc;
                const size_t dst = static_cast<size_t>(r) * pw + c;
                plane.dn[dst] = mosaic.dn[src];
                if (!mosaic.erasure.empty()) plane.erasure[dst] = mosaic.erasure[src];
            }
        }
        // Every other row of the shutter: odd-row planes start one step late.
        out.shutters[p] = ShutterProfile{shutter.t0 + pr * shutter.tr,
                                         2.0 * shutter.tr, ph};
        SparseSystemMatrix& sub = out.matrices[p];
        sub.n_sensor = static_cast<uint32_t>(pw) * ph;
        sub.n_scene = matrix.n_scene;
    }
    auto plane_of = [&](uint32_t sensor, uint32_t* local) {
        const int r = static_cast<int>(sensor) / mosaic.width;
        const int c = static_cast<int>(sensor) % mosaic.width;
        *local = static_cast<uint32_t>(r / 2) * pw + c / 2;
        return (r % 2) * 2 + (c % 2);
    };
    for (const SparseEntry& e : matrix.entries) {
        uint32_t local;
        const int p = plane_of(e.sensor, &local);
        out.matrices[p].entries.push_back({local, e.scene, e.flux});
    }
    for (uint32_t bad : matrix.invalid_pixels) {
        uint32_t local;
        const int p = plane_of(bad, &local);
        out.matrices[p].invalid_pixels.push_back(local);
    }
    return out;
}

Measurement bayer_reassemble(const BayerPlanes& planes) {
    const Measurement& p0 = planes.planes[0];
    for (const Measurement& p : planes.planes) {
        p.validate();
        if (p.width != p0.width || p.height != p0.height ||
            p.bit_depth != p0.bit_depth)
            throw param_error("bayer planes disagree on geometry");
        if (p.erasure.empty() != p0.erasure.empty())
            throw param_error("bayer planes disagree on mask presence");
    }
    Measurement out;
    out.width = 2 * p0.width;
    out.height = 2 * p0.height;
    out.bit_depth = p0.bit_depth;
    out.dn.resize(static_cast<size_t>(out.width) * out.height);
    if (!p0.erasure.empty()) out.erasure.resize(out.dn.size());
    for (int p = 0; p < 4; ++p) {
        const int pr = p >> 1, pc = p & 1;
        const Measurement& plane = planes.planes[p];
        for (int r = 0; r < plane.height; ++r) {
            for (int c = 0; c < plane.width; ++c) {
                const size_t dst = static_cast<size_t>(2 * r + pr) * out.width
                                   + 2 * c + pc;
                const size_t src = static_cast<size_t>(r) * plane.width + c;
                out.dn[dst] = plane.dn[src];
                if (!out.erasure.empty()) out.erasure[dst] = plane.erasure[src];
            }
        }
    }
    return out;
}

Measurement simulate_bayer(const RadianceImage& scene, const AcquisitionSpec& spec,
                           CfaPhase phase) {
    scene.validate();
    if (scene.channels != 3)
        throw param_error("bayer simulation expects a 3-channel scene");
    spec.validate(scene.width, scene.height);

    // Deposit each scene pixel on its sensor site, then read the channel
    // the mosaic selects there. Same energy association as the mono path.
    const size_t n = scene.pixel_count();
    std::vector<double> energy(n);
    std::vector<double> site_value(n, 0.0);
    for (size_t k = 0; k < n; ++k) {
        const uint32_t j = spec.optics.forward[k];
        const int r = static_cast<int>(j) / scene.width;
        const int c = static_cast<int>(j) % scene.width;
        site_value[j] = scene.data[k * 3 + cfa_channel(phase, r, c)];
    }
    for (size_t j = 0; j < n; ++j) {
        const double e = spec.shutter.exposure_row(static_cast<int>(j) / scene.width);
        energy[j] = (spec.sensor.gain * e) * site_value[j];
    }
    Measurement m;
    m.width = scene.width;
    m.height = scene.height;
    m.bit_depth = spec.sensor.bit_depth;
    m.dn = quantize_frame(energy, spec.sensor);
    const uint16_t cap = static_cast<uint16_t>(m.max_dn());
    m.erasure.assign(m.dn.size(), 1);
    for (size_t i = 0; i < m.dn.size(); ++i) {
        if (m.dn[i] == cap) m.erasure[i] = 0;
        else if (spec.erase_underexposed && m.dn[i] <= spec.low_threshold)
            m.erasure[i] = 0;
    }
    return m;
}

}  // namespace grrhdr
