#include "cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "grrhdr/ablation.hpp"
#include "grrhdr/analyze.hpp"
#include "grrhdr/calib.hpp"
#include "grrhdr/io.hpp"
#include "grrhdr/manifest.hpp"
#include "grrhdr/rng.hpp"
#include "grrhdr/scenes.hpp"
#include "grrhdr/simulate.hpp"
#include "grrhdr/solver.hpp"

namespace grrhdr {
namespace {

using nlohmann::json;

uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

CfaPhase parse_phase(const std::string& s) {
    if (s == "rggb") return CfaPhase::RGGB;
    if (s == "bggr") return CfaPhase::BGGR;
    if (s == "grbg") return CfaPhase::GRBG;
    if (s == "gbrg") return CfaPhase::GBRG;
    throw param_error("unknown --cfa phase: " + s);
}

// Worker pool over [0, n). Results must land at caller-chosen indices so
// the outcome does not depend on scheduling.
void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    const unsigned hw = std::thread::hardware_concurrency();
    const size_t workers = std::min<size_t>(n, hw ? hw : 1);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> cursor{0};
    std::mutex fail_mutex;
    std::exception_ptr failure;
    auto body = [&]() {
        for (;;) {
            const size_t i = cursor.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fail_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

// Collects hashes while a command runs, then drops the manifest next to
// the command's first output.
struct ManifestScribe {
    RunManifest m;

    ManifestScribe(std::string command, std::vector<std::string> args) {
        m.command = std::move(command);
        m.args = std::move(args);
    }
    void input(const std::string& path) {
        m.inputs.push_back({path, sha256_file(path)});
    }
    void output(const std::string& path) {
        m.outputs.push_back({path, sha256_file(path)});
    }
    void input_trio(const std::string& path) {
        input(path);
        if (std::filesystem::exists(mask_path(path))) input(mask_path(path));
        input(sidecar_path(path));
    }
    void output_trio(const std::string& path) {
        output(path);
        if (std::filesystem::exists(mask_path(path))) output(mask_path(path));
        output(sidecar_path(path));
    }
    void commit(const std::string& anchor) {
        write_run_manifest(anchor + ".manifest.json", m);
    }
};

json shutter_json(const ShutterProfile& s) {
    return {{"t0", s.t0}, {"tr", s.tr}, {"rows", s.rows}};
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string scene, out, cfa, knob = "scale";
    double t0 = 0.0, tr = 0.0, gain = 0.0, sigma = 0.0, scale = 1.0;
    double target = -1.0;
    uint64_t shuffle_seed = 0, noise_seed = 1;
    int bits = 8, low = 0;
    bool erase_low = false, identity = false;
    bool has_shuffle = false, has_target = false, has_gain = false;
};

void cmd_simulate(const SimulateArgs& a, ManifestScribe& scribe) {
    RadianceImage scene = read_pfm(a.scene);
    scribe.input(a.scene);
    const bool color = !a.cfa.empty();
    if (color && scene.channels != 3)
        throw param_error("--cfa needs a 3-channel scene");
    if (!color && scene.channels != 1)
        throw param_error("monochrome simulation needs a 1-channel scene; "
                          "pass --cfa for color input");

    AcquisitionSpec spec;
    spec.shutter = make_grr_profile(a.t0, a.tr, scene.height);
    const uint32_t n = static_cast<uint32_t>(scene.pixel_count());
    spec.optics = a.has_shuffle ? make_permutation(n, a.shuffle_seed)
                                : identity_permutation(n);
    spec.sensor.bit_depth = a.bits;
    spec.sensor.gain = a.has_gain ? a.gain : default_gain(a.bits, a.t0);
    spec.sensor.noise_sigma = a.sigma;
    spec.sensor.seed = a.noise_seed;
    spec.low_threshold = a.low;
    spec.erase_underexposed = a.erase_low;

    if (a.scale != 1.0) {
        if (!(a.scale > 0.0)) throw param_error("--scale must be > 0");
        for (double& v : scene.data) v *= a.scale;
    }

    MeasurementMeta meta;
    meta.cfa = a.cfa;
    meta.shuffled = a.has_shuffle;
    meta.optics_seed = a.shuffle_seed;
    meta.noise_sigma = a.sigma;
    meta.noise_seed = a.noise_seed;
    meta.low_threshold = a.low;
    meta.erase_underexposed = a.erase_low;
    meta.scene_scale = a.scale;

    Measurement meas;
    if (a.has_target) {
        if (color)
            throw param_error("--target-saturation supports monochrome scenes");
        const SaturationKnob knob = a.knob == "t0" ? SaturationKnob::BaseExposure
                                                   : SaturationKnob::SceneScale;
        const SaturationSearch s =
            calibrate_exposure_for_saturation(scene, spec, a.target, knob);
        meas = s.measurement;
        spec = s.spec;
        meta.scene_scale = a.scale * s.scene_scale;
        meta.achieved_saturation = s.achieved;
        meta.saturation_attained = s.attained;
    } else {
        meas = color ? simulate_bayer(scene, spec, parse_phase(a.cfa))
                     : forward(scene, spec);
    }
    meta.bit_depth = a.bits;
    meta.shutter = spec.shutter;
    meta.gain = spec.sensor.gain;

    write_measurement(a.out, meas, meta);
    scribe.output_trio(a.out);

    const double sat = saturation_rate(meas);
    const double under = underexposure_rate(meas, a.low);
    scribe.m.parameters = {
        {"shutter", shutter_json(spec.shutter)},
        {"optics", {{"type", a.has_shuffle ? "shuffle" : "identity"},
                    {"seed", a.shuffle_seed}}},
        {"sensor", {{"bit_depth", a.bits},
                    {"gain", spec.sensor.gain},
                    {"noise_sigma", a.sigma},
                    {"noise_seed", a.noise_seed}}},
        {"cfa", a.cfa},
        {"scene_scale", meta.scene_scale},
        {"low_threshold", a.low},
        {"erase_underexposed", a.erase_low},
        {"saturation_rate", sat},
        {"underexposure_rate", under},
    };
    if (a.has_target) {
        scribe.m.parameters["target_saturation"] = a.target;
        scribe.m.parameters["knob"] = a.knob;
        scribe.m.parameters["achieved_saturation"] = meta.achieved_saturation;
        scribe.m.parameters["saturation_attained"] = meta.saturation_attained;
        if (!meta.saturation_attained)
            std::cerr << "warning: saturation target " << fmt(a.target)
                      << " unattainable; closest achievable rate "
                      << fmt(meta.achieved_saturation) << "\n";
    }
    scribe.commit(a.out);
    std::cout << "wrote " << a.out << " saturation=" << fmt(sat)
              << " underexposed=" << fmt(under) << "\n";
}

// --------------------------------------------------------------- unshuffle

void cmd_unshuffle(const std::string& in, const std::string& out,
                   ManifestScribe& scribe) {
    MeasurementMeta meta;
    const Measurement m = read_measurement(in, &meta);
    scribe.input_trio(in);
    if (meta.layout != "sensor")
        throw param_error("measurement is already in scene order");
    if (!meta.cfa.empty())
        throw param_error("mosaics are reconstructed in sensor order; "
                          "unshuffle does not apply");
    const PermutationMap map =
        meta.shuffled
            ? make_permutation(static_cast<uint32_t>(m.pixel_count()),
                               meta.optics_seed)
            : identity_permutation(static_cast<uint32_t>(m.pixel_count()));
    const Measurement un = unshuffle(m, map);
    meta.layout = "scene";
    write_measurement(out, un, meta);
    scribe.output_trio(out);
    scribe.m.parameters = {{"optics", {{"type", meta.shuffled ? "shuffle" : "identity"},
                                       {"seed", meta.optics_seed}}}};
    scribe.commit(out);
    std::cout << "wrote " << out << "\n";
}

// ------------------------------------------------------------- reconstruct

struct ReconstructArgs {
    std::string in, out, matrix, report;
    double tau = 0.0, tol = 1e-7;
    int max_iters = 300, inner = 10;
    int scene_width = 0, scene_height = 0;
    bool color = false, has_tau = false;
};

void write_report_csv(const std::string& path, const ConvergenceReport& r) {
    std::string out = "iteration,objective,rel_change\n";
    out += "0," + fmt(r.objective.at(0)) + ",\n";
    for (size_t k = 0; k < r.rel_change.size(); ++k)
        out += std::to_string(k + 1) + "," + fmt(r.objective.at(k + 1)) + "," +
               fmt(r.rel_change[k]) + "\n";
    write_file_atomic(path, out);
}

void cmd_reconstruct(const ReconstructArgs& a, ManifestScribe& scribe) {
    MeasurementMeta meta;
    const Measurement m = read_measurement(a.in, &meta);
    scribe.input_trio(a.in);

    const double tau = a.has_tau ? a.tau : 1e-3 * m.max_dn() * meta.gain;
    std::string operator_kind;
    SolveResult solved;

    if (a.color) {
        if (meta.cfa.empty()) throw param_error("--color needs a mosaic measurement");
        if (meta.layout != "sensor")
            throw param_error("mosaic measurements must stay in sensor order");
        const CfaPhase phase = parse_phase(meta.cfa);
        SparseSystemMatrix matrix;
        if (!a.matrix.empty()) {
            matrix = read_matrix(a.matrix);
            scribe.input(a.matrix);
            operator_kind = "matrix";
        } else {
            const PermutationMap map =
                meta.shuffled
                    ? make_permutation(static_cast<uint32_t>(m.pixel_count()),
                                       meta.optics_seed)
                    : identity_permutation(static_cast<uint32_t>(m.pixel_count()));
            matrix = matrix_from_permutation(map, meta.gain);
            operator_kind = "synthetic";
        }
        const BayerPlanes planes = bayer_split(m, meta.shutter, matrix, phase);
        std::vector<SparseOperator> ops;
        ops.reserve(4);
        for (int p = 0; p < 4; ++p)
            ops.emplace_back(planes.matrices[p], planes.shutters[p], m.width / 2);
        ColorInverseProblem prob;
        for (int p = 0; p < 4; ++p)
            prob.blocks.push_back({&ops[p], &planes.planes[p], planes.channel[p]});
        prob.scene_width = m.width;
        prob.scene_height = m.height;
        prob.tau = tau;
        prob.max_iters = a.max_iters;
        prob.rel_tol = a.tol;
        prob.tv_inner_iters = a.inner;
        solved = fista_solve_color(prob);
    } else if (!a.matrix.empty()) {
        if (meta.layout != "sensor")
            throw param_error("a calibrated matrix maps scene points to sensor "
                              "order; reconstruct the un-unshuffled measurement");
        const SparseSystemMatrix matrix = read_matrix(a.matrix);
        scribe.input(a.matrix);
        operator_kind = "matrix";
        int sw = a.scene_width, sh = a.scene_height;
        if (sw == 0 && sh == 0) {
            if (matrix.n_scene != m.pixel_count())
                throw param_error("matrix scene size differs from the sensor "
                                  "grid; pass --scene-width and --scene-height");
            sw = m.width;
            sh = m.height;
        }
        if (static_cast<size_t>(sw) * sh != matrix.n_scene)
            throw param_error("--scene-width x --scene-height does not match "
                              "the matrix scene size");
        const SparseOperator op(matrix, meta.shutter, m.width);
        InverseProblem prob;
        prob.op = &op;
        prob.measurement = &m;
        prob.scene_width = sw;
        prob.scene_height = sh;
        prob.tau = tau;
        prob.max_iters = a.max_iters;
        prob.rel_tol = a.tol;
        prob.tv_inner_iters = a.inner;
        solved = fista_solve(prob);
    } else {
        if (!meta.cfa.empty())
            throw param_error("mosaic measurements need --color");
        operator_kind = "synthetic";
        const PermutationMap map =
            meta.shuffled
                ? make_permutation(static_cast<uint32_t>(m.pixel_count()),
                                   meta.optics_seed)
                : identity_permutation(static_cast<uint32_t>(m.pixel_count()));
        const Measurement scene_order =
            (meta.layout == "sensor" && meta.shuffled) ? unshuffle(m, map) : m;
        const SyntheticOperator op(meta.shutter, map, meta.gain, m.width);
        InverseProblem prob;
        prob.op = &op;
        prob.measurement = &scene_order;
        prob.scene_width = m.width;
        prob.scene_height = m.height;
        prob.tau = tau;
        prob.max_iters = a.max_iters;
        prob.rel_tol = a.tol;
        prob.tv_inner_iters = a.inner;
        solved = fista_solve(prob);
    }

    write_pfm(a.out, solved.image);
    scribe.output(a.out);
    if (!a.report.empty()) {
        write_report_csv(a.report, solved.report);
        scribe.output(a.report);
    }
    const ConvergenceReport& r = solved.report;
    scribe.m.parameters = {
        {"operator", operator_kind},
        {"color", a.color},
        {"tau", tau},
        {"max_iters", a.max_iters},
        {"rel_tol", a.tol},
        {"tv_inner_iters", a.inner},
        {"iterations", r.iterations},
        {"converged", r.converged},
        {"final_rel_change", r.final_rel_change},
        {"final_objective", r.objective.back()},
        {"lipschitz", r.lipschitz},
    };
    scribe.commit(a.out);
    std::cout << "wrote " << a.out << " iterations=" << r.iterations
              << " converged=" << (r.converged ? "yes" : "no")
              << " objective=" << fmt(r.objective.back()) << "\n";
}

// --------------------------------------------------------------- calibrate

struct CalibrateArgs {
    std::string out;
    int width = 0, height = 0, bits = 8;
    std::vector<double> exposures;
    double gain = 0.0, sigma = 0.0, flux = 1.0, sparsity_floor = 1e-3;
    uint64_t seed = 1, shuffle_seed = 0;
    int dark_threshold = 2, dark_frames = 3, hot_pixels = 0;
    int valid_low = 2;
    double min_corr = 0.95;
    bool has_shuffle = false, has_gain = false;
};

void cmd_calibrate(const CalibrateArgs& a, ManifestScribe& scribe) {
    if (a.width < 1 || a.height < 1)
        throw param_error("--width and --height must be >= 1");
    if (a.exposures.size() < 3)
        throw param_error("calibration needs at least 3 exposures");
    if (!(a.flux > 0.0)) throw param_error("--flux must be > 0");
    std::vector<double> exps = a.exposures;
    std::sort(exps.begin(), exps.end());

    const uint32_t n = static_cast<uint32_t>(a.width) * a.height;
    const PermutationMap map = a.has_shuffle ? make_permutation(n, a.shuffle_seed)
                                             : identity_permutation(n);
    // Default puts the source at mid-scale for the median exposure.
    const double gain = a.has_gain
                            ? a.gain
                            : std::ldexp(1.0, a.bits - 1) /
                                  (a.flux * exps[exps.size() / 2]);

    std::vector<ExposureStack> stacks(n);
    parallel_for(n, [&](size_t k) {
        RadianceImage delta(a.width, a.height, 1, 0.0);
        delta.data[k] = a.flux;
        ExposureStack& st = stacks[k];
        st.source_index = static_cast<int>(k);
        for (size_t l = 0; l < exps.size(); ++l) {
            AcquisitionSpec spec;
            spec.shutter = make_grr_profile(exps[l], 0.0, a.height);
            spec.optics = map;
            spec.sensor.bit_depth = a.bits;
            spec.sensor.gain = gain;
            spec.sensor.noise_sigma = a.sigma;
            spec.sensor.seed = mix(a.seed, k * exps.size() + l);
            st.exposures.push_back(exps[l]);
            st.frames.push_back(forward(delta, spec));
        }
    });

    std::vector<Measurement> darks;
    const RadianceImage black(a.width, a.height, 1, 0.0);
    for (int d = 0; d < a.dark_frames; ++d) {
        AcquisitionSpec spec;
        spec.shutter = make_grr_profile(exps.back(), 0.0, a.height);
        spec.optics = map;
        spec.sensor.bit_depth = a.bits;
        spec.sensor.gain = gain;
        spec.sensor.noise_sigma = a.sigma;
        spec.sensor.seed = mix(a.seed, 0xDA2Cull + d);
        darks.push_back(forward(black, spec));
    }
    if (a.hot_pixels > 0) {
        if (static_cast<uint32_t>(a.hot_pixels) >= n)
            throw param_error("--hot-pixels must be below the pixel count");
        Rng rng(mix(a.seed, 0x407));
        std::set<uint32_t> hot;
        while (hot.size() < static_cast<size_t>(a.hot_pixels))
            hot.insert(static_cast<uint32_t>(rng.below(n)));
        const uint16_t dn = static_cast<uint16_t>(
            std::min<int>((1 << a.bits) - 1, a.dark_threshold + 3));
        for (Measurement& d : darks)
            for (uint32_t idx : hot) d.dn[idx] = dn;
    }

    FluxScreen screen;
    screen.valid_low = a.valid_low;
    screen.min_correlation = a.min_corr;
    SparseSystemMatrix matrix = build_matrix(
        stacks, darks, a.dark_threshold, screen, a.sparsity_floor);
    // The estimates carry the source radiance; divide it back out so the
    // stored flux is DN per second per unit scene value.
    for (SparseEntry& e : matrix.entries) e.flux /= a.flux;
    write_matrix(a.out, matrix);
    scribe.output(a.out);

    // The optics are known here, so the run can score itself against the
    // ground truth it was generated from.
    double max_rel = 0.0;
    size_t mismatched = 0;
    std::vector<uint8_t> covered(n, 0);
    for (const SparseEntry& e : matrix.entries) {
        covered[e.scene] = 1;
        max_rel = std::max(max_rel, std::abs(e.flux - gain) / gain);
        if (map.forward[e.scene] != e.sensor) ++mismatched;
    }
    const size_t n_covered =
        static_cast<size_t>(std::count(covered.begin(), covered.end(), 1));

    json report = {
        {"schema_version", kScenarioFormatVersion},
        {"n_sensor", matrix.n_sensor},
        {"n_scene", matrix.n_scene},
        {"entries", matrix.entries.size()},
        {"invalid_pixels", matrix.invalid_pixels},
        {"covered_columns", n_covered},
        {"max_rel_flux_error", max_rel},
        {"mismatched_indices", mismatched},
    };
    const std::string report_path = a.out + ".report.json";
    write_file_atomic(report_path, report.dump(2) + "\n");
    scribe.output(report_path);

    scribe.m.parameters = {
        {"width", a.width},
        {"height", a.height},
        {"bit_depth", a.bits},
        {"exposures", exps},
        {"gain", gain},
        {"noise_sigma", a.sigma},
        {"flux", a.flux},
        {"seed", a.seed},
        {"optics", {{"type", a.has_shuffle ? "shuffle" : "identity"},
                    {"seed", a.shuffle_seed}}},
        {"dark_threshold", a.dark_threshold},
        {"dark_frames", a.dark_frames},
        {"hot_pixels", a.hot_pixels},
        {"valid_low", a.valid_low},
        {"min_correlation", a.min_corr},
        {"sparsity_floor", a.sparsity_floor},
        {"max_rel_flux_error", max_rel},
        {"mismatched_indices", mismatched},
    };
    scribe.commit(a.out);
    std::cout << "wrote " << a.out << " entries=" << matrix.entries.size()
              << " invalid=" << matrix.invalid_pixels.size()
              << " max_rel_flux_error=" << fmt(max_rel) << "\n";
}

// ------------------------------------------------------------------- merge

void cmd_merge(const std::vector<std::string>& frames, const std::string& out,
               std::vector<double> times, int low, ManifestScribe& scribe) {
    if (frames.size() < 2) throw param_error("merge needs at least 2 frames");
    if (!times.empty() && times.size() != frames.size())
        throw param_error("--times must list one exposure per frame");
    std::vector<Measurement> ms;
    for (size_t i = 0; i < frames.size(); ++i) {
        MeasurementMeta meta;
        ms.push_back(read_measurement(frames[i], &meta));
        scribe.input_trio(frames[i]);
        if (times.size() == frames.size()) continue;
        if (meta.shutter.tr != 0.0)
            throw param_error("merge expects global-shutter brackets; " +
                              frames[i] + " is row-graded (pass --times to "
                              "override)");
        times.push_back(meta.shutter.t0);
    }
    const RadianceImage merged = merge_exposures(ms, times, low);
    write_pfm(out, merged);
    scribe.output(out);
    scribe.m.parameters = {{"times", times}, {"low_threshold", low}};
    scribe.commit(out);
    std::cout << "wrote " << out << "\n";
}

// -------------------------------------------------------------- analyze-dr

struct AnalyzeDrArgs {
    std::string out;
    double t0 = 0.0, tr = 0.0, imin = 1.0;
    int rows = 0, width = 0, bits = 8;
    uint64_t shuffle_seed = 0;
    bool has_shuffle = false;
    std::vector<int> sizes = {2, 3, 4, 5};
};

void cmd_analyze_dr(const AnalyzeDrArgs& a, ManifestScribe& scribe) {
    const ShutterProfile profile = make_grr_profile(a.t0, a.tr, a.rows);
    if (a.width < 1) throw param_error("--width must be >= 1");
    const uint32_t n = static_cast<uint32_t>(a.rows) * a.width;
    const PermutationMap map = a.has_shuffle ? make_permutation(n, a.shuffle_seed)
                                             : identity_permutation(n);
    const std::vector<double> grid = conjugated_exposure(profile, map, a.width);
    SensorConfig sensor;
    sensor.bit_depth = a.bits;
    const DrReport report = patch_dr_histogram(grid, a.width, a.rows, sensor,
                                               a.sizes);

    const double native =
        20.0 * std::log10(static_cast<double>(sensor.max_dn()) / a.imin);
    std::string csv;
    csv += "# dynamic-range report\n";
    csv += "# native_db=" + fmt(native) + "\n";
    csv += "# global_db=" + fmt(report.global_db) + "\n";
    if (a.tr > 0.0 && a.rows > 1)
        csv += "# row_span_db=" +
               fmt(dynamic_range_grr(sensor.max_dn(), a.imin, a.t0, a.tr, 1,
                                     a.rows)) +
               "\n";
    csv += "size,count,mean_db,p5_db,p95_db,first_bin_db,bins\n";
    for (const PatchDrStats& s : report.per_size) {
        csv += std::to_string(s.size) + "," + std::to_string(s.count) + "," +
               fmt(s.mean_db) + "," + fmt(s.p5_db) + "," + fmt(s.p95_db) + "," +
               std::to_string(s.first_bin_db) + ",";
        for (size_t b = 0; b < s.bins.size(); ++b) {
            if (b) csv += ";";
            csv += std::to_string(s.bins[b]);
        }
        csv += "\n";
    }
    write_file_atomic(a.out, csv);
    scribe.output(a.out);
    scribe.m.parameters = {
        {"shutter", shutter_json(profile)},
        {"width", a.width},
        {"optics", {{"type", a.has_shuffle ? "shuffle" : "identity"},
                    {"seed", a.shuffle_seed}}},
        {"bit_depth", a.bits},
        {"imin", a.imin},
        {"sizes", a.sizes},
        {"global_db", report.global_db},
    };
    scribe.commit(a.out);
    std::cout << "wrote " << a.out << " global_db=" << fmt(report.global_db)
              << "\n";
}

// ------------------------------------------------- highlight-density, metrics

void cmd_highlight_density(const std::string& in, const std::string& out,
                           ManifestScribe& scribe) {
    const RadianceImage img = read_pfm(in);
    scribe.input(in);
    const double density = isolated_highlight_density(img);
    json j = {{"schema_version", 1}, {"density", density}};
    write_file_atomic(out, j.dump(2) + "\n");
    scribe.output(out);
    scribe.m.parameters = {{"density", density}};
    scribe.commit(out);
    std::cout << "density=" << fmt(density) << "\n";
}

void cmd_metrics(const std::string& ref_path, const std::string& test_path,
                 const std::string& out, const std::string& norm,
                 ManifestScribe& scribe) {
    const RadianceImage ref = read_pfm(ref_path);
    const RadianceImage test = read_pfm(test_path);
    scribe.input(ref_path);
    scribe.input(test_path);
    const MetricNormalization mn = norm == "mean" ? MetricNormalization::Mean
                                                  : MetricNormalization::Max;
    const FidelityMetrics fm = fidelity_metrics(ref, test, mn);
    json j = {{"schema_version", 1},
              {"psnr_db", fm.psnr_db},
              {"psnr_gamma_db", fm.psnr_gamma_db},
              {"ssim", fm.ssim},
              {"normalization", norm}};
    write_file_atomic(out, j.dump(2) + "\n");
    scribe.output(out);
    scribe.m.parameters = j;
    scribe.commit(out);
    std::cout << "psnr_db=" << fmt(fm.psnr_db)
              << " psnr_gamma_db=" << fmt(fm.psnr_gamma_db)
              << " ssim=" << fmt(fm.ssim) << "\n";
}

// ---------------------------------------------------------------- ablation

struct AblationArgs {
    std::string corpus, scenarios, out;
    uint64_t seed = 0;
    bool has_seed = false;
};

void cmd_ablation(const AblationArgs& a, ManifestScribe& scribe) {
    json sj;
    try {
        sj = json::parse(read_file(a.scenarios));
    } catch (const json::exception& e) {
        throw format_error("bad scenario file: " + std::string(e.what()));
    }
    scribe.input(a.scenarios);
    if (sj.value("schema_version", 0) != kScenarioFormatVersion)
        throw format_error("scenario file has an unsupported schema_version");

    AblationConfig config;
    try {
        const json c = sj.value("config", json::object());
        config.t0 = c.value("t0", config.t0);
        config.tr = c.value("tr", config.tr);
        config.bit_depth = c.value("bit_depth", config.bit_depth);
        config.sigma_norm = c.value("sigma_norm", config.sigma_norm);
        config.max_iters = c.value("max_iters", config.max_iters);
        config.rel_tol = c.value("rel_tol", config.rel_tol);
        config.tv_inner_iters = c.value("tv_inner_iters", config.tv_inner_iters);
        config.seed = c.value("seed", config.seed);

        std::vector<AblationScenario> scenarios;
        for (const json& s : sj.at("scenarios")) {
            AblationScenario sc;
            sc.name = s.at("name").get<std::string>();
            sc.shuffle = s.value("shuffle", false);
            sc.grr = s.value("grr", false);
            sc.tau_rel = s.value("tau_rel", 0.0);
            sc.target_saturation = s.value("target_saturation", 0.10);
            scenarios.push_back(sc);
        }
        if (a.has_seed) config.seed = a.seed;

        std::vector<std::string> paths;
        for (const auto& entry : std::filesystem::directory_iterator(a.corpus))
            if (entry.is_regular_file() && entry.path().extension() == ".pfm")
                paths.push_back(entry.path().string());
        std::sort(paths.begin(), paths.end());
        if (paths.empty())
            throw param_error("no .pfm scenes under " + a.corpus);

        std::vector<RadianceImage> scenes;
        std::vector<std::string> names;
        for (const std::string& p : paths) {
            scenes.push_back(read_pfm(p));
            names.push_back(std::filesystem::path(p).filename().string());
            scribe.input(p);
        }

        const AblationResult result =
            run_ablation(scenes, names, scenarios, config);

        std::string csv = "# per-scene\n";
        csv += "scenario,scene,psnr_db,psnr_gamma_db,ssim,"
               "achieved_saturation,attained,iterations\n";
        for (const AblationRow& r : result.rows)
            csv += r.scenario + "," + r.scene + "," + fmt(r.psnr) + "," +
                   fmt(r.psnr_gamma) + "," + fmt(r.ssim) + "," +
                   fmt(r.achieved_saturation) + "," +
                   (r.attained ? "1" : "0") + "," +
                   std::to_string(r.iterations) + "\n";
        csv += "# summary\n";
        csv += "scenario,mean_psnr_db,std_psnr_db,mean_psnr_gamma_db,"
               "mean_ssim\n";
        for (const AblationSummary& s : result.summaries)
            csv += s.scenario + "," + fmt(s.mean_psnr) + "," +
                   fmt(s.std_psnr) + "," + fmt(s.mean_psnr_gamma) + "," +
                   fmt(s.mean_ssim) + "\n";
        write_file_atomic(a.out, csv);
        scribe.output(a.out);

        json scen_echo = json::array();
        for (const AblationScenario& s : scenarios)
            scen_echo.push_back({{"name", s.name},
                                 {"shuffle", s.shuffle},
                                 {"grr", s.grr},
                                 {"tau_rel", s.tau_rel},
                                 {"target_saturation", s.target_saturation}});
        scribe.m.parameters = {
            {"config", {{"t0", config.t0},
                        {"tr", config.tr},
                        {"bit_depth", config.bit_depth},
                        {"sigma_norm", config.sigma_norm},
                        {"max_iters", config.max_iters},
                        {"rel_tol", config.rel_tol},
                        {"tv_inner_iters", config.tv_inner_iters},
                        {"seed", config.seed}}},
            {"scenarios", scen_echo},
        };
        scribe.commit(a.out);

        for (const AblationSummary& s : result.summaries)
            std::cout << s.scenario << " mean_psnr_db=" << fmt(s.mean_psnr)
                      << " std_psnr_db=" << fmt(s.std_psnr)
                      << " mean_ssim=" << fmt(s.mean_ssim) << "\n";
    } catch (const json::exception& e) {
        throw format_error("bad scenario file: " + std::string(e.what()));
    }
}

// -------------------------------------------------------------- make-scene

void cmd_make_scene(const std::string& out, const std::string& kind, int width,
                    int height, uint64_t seed, int channels,
                    ManifestScribe& scribe) {
    const RadianceImage scene =
        make_test_scene(scene_kind_from_name(kind), width, height, seed,
                        channels);
    write_pfm(out, scene);
    scribe.output(out);
    scribe.m.parameters = {{"kind", kind},
                           {"width", width},
                           {"height", height},
                           {"seed", seed},
                           {"channels", channels}};
    scribe.commit(out);
    std::cout << "wrote " << out << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);

    CLI::App app{"grrhdr: single-shot HDR with shuffled optics and a "
                 "global-reset-release shutter"};
    app.set_version_flag(
        "--version",
        std::string("grrhdr ") + kToolVersion + " (formats: measurement v" +
            std::to_string(kMeasurementFormatVersion) + ", matrix v" +
            std::to_string(kMatrixFormatVersion) + ", scenario v" +
            std::to_string(kScenarioFormatVersion) + ", manifest v" +
            std::to_string(kManifestFormatVersion) + ")");
    app.require_subcommand(1);

    std::function<void(ManifestScribe&)> action;
    std::string command;

    // simulate
    SimulateArgs sim;
    {
        CLI::App* c = app.add_subcommand(
            "simulate", "capture a scene through the shutter/optics model");
        c->add_option("scene", sim.scene, "input scene (PFM)")->required();
        c->add_option("--out", sim.out, "output measurement (PGM trio)")
            ->required();
        c->add_option("--t0", sim.t0, "base exposure, seconds")->required();
        c->add_option("--tr", sim.tr, "per-row exposure increment, seconds");
        c->add_option("--bits", sim.bits, "ADC bit depth (1..16)");
        auto* og = c->add_option("--gain", sim.gain,
                                 "DN per unit energy (default: mid-scale "
                                 "for unit radiance at t0)");
        c->add_option("--sigma", sim.sigma, "read noise sigma, DN");
        c->add_option("--seed", sim.noise_seed, "noise stream seed");
        auto* os = c->add_option("--shuffle-seed", sim.shuffle_seed,
                                 "enable permutation optics with this seed");
        c->add_flag("--identity-optics", sim.identity,
                    "bare lens (explicit identity mapping)")
            ->excludes(os);
        c->add_option("--low-threshold", sim.low,
                      "DN at or below this count as underexposed");
        c->add_flag("--erase-underexposed", sim.erase_low,
                    "extend the erasure mask to underexposed pixels");
        c->add_option("--scale", sim.scale, "scene radiance multiplier");
        auto* ot = c->add_option("--target-saturation", sim.target,
                                 "search the knob for this saturation rate");
        c->add_option("--knob", sim.knob, "targeting knob: scale or t0")
            ->check(CLI::IsMember({"scale", "t0"}));
        c->add_option("--cfa", sim.cfa,
                      "mosaic capture with this CFA phase (e.g. rggb)");
        c->callback([&, og, os, ot]() {
            sim.has_gain = og->count() > 0;
            sim.has_shuffle = os->count() > 0;
            sim.has_target = ot->count() > 0;
            command = "simulate";
            action = [&](ManifestScribe& s) { cmd_simulate(sim, s); };
        });
    }

    // unshuffle
    struct { std::string in, out; } un;
    {
        CLI::App* c = app.add_subcommand(
            "unshuffle", "reorder a shuffled measurement into scene order");
        c->add_option("measurement", un.in, "input measurement")->required();
        c->add_option("--out", un.out, "output measurement")->required();
        c->callback([&]() {
            command = "unshuffle";
            action = [&](ManifestScribe& s) { cmd_unshuffle(un.in, un.out, s); };
        });
    }

    // reconstruct
    ReconstructArgs rec;
    {
        CLI::App* c = app.add_subcommand(
            "reconstruct", "recover HDR radiance from a measurement");
        c->add_option("measurement", rec.in, "input measurement")->required();
        c->add_option("--out", rec.out, "output reconstruction (PFM)")
            ->required();
        auto* otau = c->add_option(
            "--tau", rec.tau,
            "TV weight (default: 1e-3 * (2^bits - 1) * gain)");
        c->add_option("--max-iters", rec.max_iters, "iteration cap");
        c->add_option("--tol", rec.tol, "relative-change stopping tolerance");
        c->add_option("--inner", rec.inner, "TV prox inner iterations");
        c->add_option("--matrix", rec.matrix, "calibrated system matrix file");
        c->add_flag("--color", rec.color, "joint RGB solve of a mosaic");
        c->add_option("--scene-width", rec.scene_width,
                      "scene grid width (matrix operators only)");
        c->add_option("--scene-height", rec.scene_height,
                      "scene grid height (matrix operators only)");
        c->add_option("--report", rec.report,
                      "write per-iteration convergence CSV here");
        c->callback([&, otau]() {
            rec.has_tau = otau->count() > 0;
            command = "reconstruct";
            action = [&](ManifestScribe& s) { cmd_reconstruct(rec, s); };
        });
    }

    // calibrate
    CalibrateArgs cal;
    {
        CLI::App* c = app.add_subcommand(
            "calibrate",
            "estimate the system matrix from synthetic bracketed stacks");
        c->add_option("--out", cal.out, "output matrix file")->required();
        c->add_option("--width", cal.width, "sensor/scene width")->required();
        c->add_option("--height", cal.height, "sensor/scene height")
            ->required();
        c->add_option("--exposures", cal.exposures,
                      "bracket exposures, seconds (comma separated)")
            ->required()
            ->delimiter(',');
        c->add_option("--bits", cal.bits, "ADC bit depth");
        auto* og = c->add_option("--gain", cal.gain,
                                 "DN per unit energy (default: mid-scale at "
                                 "the median exposure)");
        c->add_option("--sigma", cal.sigma, "read noise sigma, DN");
        c->add_option("--flux", cal.flux, "calibration source radiance");
        c->add_option("--seed", cal.seed, "noise stream seed");
        auto* os = c->add_option("--shuffle-seed", cal.shuffle_seed,
                                 "permutation optics seed");
        c->add_option("--dark-threshold", cal.dark_threshold,
                      "mean dark DN above this marks a pixel invalid");
        c->add_option("--dark-frames", cal.dark_frames,
                      "number of dark frames");
        c->add_option("--hot-pixels", cal.hot_pixels,
                      "inject this many defective pixels into the darks");
        c->add_option("--valid-low", cal.valid_low,
                      "DN floor of the usable range");
        c->add_option("--min-corr", cal.min_corr,
                      "exposure/DN correlation screen");
        c->add_option("--sparsity-floor", cal.sparsity_floor,
                      "drop entries below this fraction of the column max");
        c->callback([&, og, os]() {
            cal.has_gain = og->count() > 0;
            cal.has_shuffle = os->count() > 0;
            command = "calibrate";
            action = [&](ManifestScribe& s) { cmd_calibrate(cal, s); };
        });
    }

    // merge
    struct {
        std::vector<std::string> frames;
        std::string out;
        std::vector<double> times;
        int low = 0;
    } mg;
    {
        CLI::App* c = app.add_subcommand(
            "merge", "exposure-bracket merge (ground-truth oracle)");
        c->add_option("frames", mg.frames, "bracketed measurements")
            ->required()
            ->expected(-2);
        c->add_option("--out", mg.out, "output HDR (PFM)")->required();
        c->add_option("--times", mg.times,
                      "override exposure times, seconds (comma separated)")
            ->delimiter(',');
        c->add_option("--low-threshold", mg.low,
                      "DN at or below this count as underexposed");
        c->callback([&]() {
            command = "merge";
            action = [&](ManifestScribe& s) {
                cmd_merge(mg.frames, mg.out, mg.times, mg.low, s);
            };
        });
    }

    // analyze-dr
    AnalyzeDrArgs dr;
    {
        CLI::App* c = app.add_subcommand(
            "analyze-dr", "patch dynamic-range histogram of an exposure grid");
        c->add_option("--out", dr.out, "output CSV")->required();
        c->add_option("--t0", dr.t0, "base exposure, seconds")->required();
        c->add_option("--tr", dr.tr, "per-row exposure increment, seconds");
        c->add_option("--rows", dr.rows, "sensor rows")->required();
        c->add_option("--width", dr.width, "sensor width")->required();
        auto* os = c->add_option("--shuffle-seed", dr.shuffle_seed,
                                 "permutation optics seed");
        c->add_option("--bits", dr.bits, "ADC bit depth");
        c->add_option("--imin", dr.imin, "darkest usable DN");
        c->add_option("--sizes", dr.sizes, "patch sizes (comma separated)")
            ->delimiter(',');
        c->callback([&, os]() {
            dr.has_shuffle = os->count() > 0;
            command = "analyze-dr";
            action = [&](ManifestScribe& s) { cmd_analyze_dr(dr, s); };
        });
    }

    // highlight-density
    struct { std::string in, out; } hd;
    {
        CLI::App* c = app.add_subcommand(
            "highlight-density", "isolated-highlight density of a scene");
        c->add_option("scene", hd.in, "input scene (PFM)")->required();
        c->add_option("--out", hd.out, "output JSON")->required();
        c->callback([&]() {
            command = "highlight-density";
            action = [&](ManifestScribe& s) {
                cmd_highlight_density(hd.in, hd.out, s);
            };
        });
    }

    // metrics
    struct {
        std::string ref, test, out, norm = "max";
    } mt;
    {
        CLI::App* c = app.add_subcommand(
            "metrics", "PSNR / gamma PSNR / SSIM between two images");
        c->add_option("reference", mt.ref, "reference image (PFM)")->required();
        c->add_option("test", mt.test, "test image (PFM)")->required();
        c->add_option("--out", mt.out, "output JSON")->required();
        c->add_option("--normalize", mt.norm, "ref statistic: max or mean")
            ->check(CLI::IsMember({"max", "mean"}));
        c->callback([&]() {
            command = "metrics";
            action = [&](ManifestScribe& s) {
                cmd_metrics(mt.ref, mt.test, mt.out, mt.norm, s);
            };
        });
    }

    // ablation
    AblationArgs ab;
    {
        CLI::App* c = app.add_subcommand(
            "ablation", "batch optics/shutter/prior comparison over a corpus");
        c->add_option("--corpus", ab.corpus, "directory of .pfm scenes")
            ->required();
        c->add_option("--scenarios", ab.scenarios, "scenario JSON file")
            ->required();
        c->add_option("--out", ab.out, "output CSV")->required();
        auto* osd = c->add_option("--seed", ab.seed,
                                  "override the scenario file's seed");
        c->callback([&, osd]() {
            ab.has_seed = osd->count() > 0;
            command = "ablation";
            action = [&](ManifestScribe& s) { cmd_ablation(ab, s); };
        });
    }

    // make-scene
    struct {
        std::string out, kind = "blobs";
        int width = 128, height = 128, channels = 1;
        uint64_t seed = 1;
    } ms;
    {
        CLI::App* c = app.add_subcommand(
            "make-scene", "generate a synthetic HDR test scene");
        c->add_option("--out", ms.out, "output scene (PFM)")->required();
        c->add_option("--kind", ms.kind,
                      "blobs, blocks, wedge, ramp, or dots");
        c->add_option("--width", ms.width, "scene width");
        c->add_option("--height", ms.height, "scene height");
        c->add_option("--seed", ms.seed, "generator seed");
        c->add_option("--channels", ms.channels, "1 or 3");
        c->callback([&]() {
            command = "make-scene";
            action = [&](ManifestScribe& s) {
                cmd_make_scene(ms.out, ms.kind, ms.width, ms.height, ms.seed,
                               ms.channels, s);
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        ManifestScribe scribe(command, args);
        action(scribe);
        return 0;
    } catch (const param_error& e) {
        std::cerr << "parameter error: " << e.what() << "\n";
        return 2;
    } catch (const format_error& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const convergence_error& e) {
        std::cerr << "convergence error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace grrhdr
