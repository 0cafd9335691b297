#include "grrhdr/ablation.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "grrhdr/analyze.hpp"
#include "grrhdr/simulate.hpp"
#include "grrhdr/solver.hpp"

namespace grrhdr {

namespace {

uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

AblationRow run_one(const RadianceImage& scene, const std::string& scene_name,
                    size_t si, const AblationScenario& sc,
                    const AblationConfig& config) {
    AcquisitionSpec spec;
    spec.shutter =
        make_grr_profile(config.t0, sc.grr ? config.tr : 0.0, scene.height);
    // Randomness is keyed on the scene index alone so every scenario sees
    // the same optics and noise stream for a given scene.
    spec.optics =
        sc.shuffle
            ? make_permutation(static_cast<uint32_t>(scene.pixel_count()),
                               mix(config.seed, si * 2 + 1))
            : identity_permutation(static_cast<uint32_t>(scene.pixel_count()));
    spec.sensor.bit_depth = config.bit_depth;
    spec.sensor.gain = default_gain(config.bit_depth, config.t0);
    spec.sensor.noise_sigma = config.sigma_norm * spec.sensor.max_dn();
    spec.sensor.seed = mix(config.seed, si * 2 + 2);

    const SaturationSearch search = calibrate_exposure_for_saturation(
        scene, spec, sc.target_saturation, SaturationKnob::SceneScale);

    RadianceImage ref = scene;
    for (double& v : ref.data) v *= search.scene_scale;

    const Measurement unshuffled = unshuffle(search.measurement, spec.optics);
    SyntheticOperator op(search.spec.shutter, spec.optics, spec.sensor.gain,
                         scene.width);

    const double mean_exposure =
        search.spec.shutter.t0 +
        search.spec.shutter.tr * (scene.height - 1) / 2.0;
    InverseProblem prob;
    prob.op = &op;
    prob.measurement = &unshuffled;
    prob.scene_width = scene.width;
    prob.scene_height = scene.height;
    prob.tau =
        sc.tau_rel * spec.sensor.max_dn() * spec.sensor.gain * mean_exposure;
    prob.max_iters = config.max_iters;
    prob.rel_tol = config.rel_tol;
    prob.tv_inner_iters = config.tv_inner_iters;

    const SolveResult solved = fista_solve(prob);
    const FidelityMetrics m = fidelity_metrics(ref, solved.image);

    AblationRow row;
    row.scenario = sc.name;
    row.scene = scene_name;
    row.psnr = m.psnr_db;
    row.psnr_gamma = m.psnr_gamma_db;
    row.ssim = m.ssim;
    row.achieved_saturation = search.achieved;
    row.attained = search.attained;
    row.iterations = solved.report.iterations;
    return row;
}

}  // namespace

AblationResult run_ablation(const std::vector<RadianceImage>& scenes,
                            const std::vector<std::string>& scene_names,
                            const std::vector<AblationScenario>& scenarios,
                            const AblationConfig& config) {
    if (scenes.empty()) throw param_error("ablation corpus is empty");
    if (scenes.size() != scene_names.size())
        throw param_error("scene/name count mismatch");
    if (scenarios.empty()) throw param_error("no scenarios given");
    for (const RadianceImage& scene : scenes) {
        scene.validate();
        if (scene.channels != 1)
            throw param_error("ablation scenes must be single channel");
    }

    // One job per (scenario, scene) pair, farmed out to a worker pool.
    // Rows land at fixed indices, so the result is independent of
    // scheduling.
    const size_t n_jobs = scenarios.size() * scenes.size();
    AblationResult result;
    result.rows.resize(n_jobs);

    std::atomic<size_t> cursor{0};
    std::mutex fail_mutex;
    std::exception_ptr failure;
    auto worker = [&]() {
        for (;;) {
            const size_t j = cursor.fetch_add(1);
            if (j >= n_jobs) return;
            const size_t ci = j / scenes.size();
            const size_t si = j % scenes.size();
            try {
                result.rows[j] = run_one(scenes[si], scene_names[si], si,
                                         scenarios[ci], config);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fail_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const unsigned hw = std::thread::hardware_concurrency();
    const size_t n_workers =
        std::min<size_t>(n_jobs, hw ? hw : 1);
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (size_t ci = 0; ci < scenarios.size(); ++ci) {
        double sum_p = 0, sum_p2 = 0, sum_g = 0, sum_s = 0;
        for (size_t si = 0; si < scenes.size(); ++si) {
            const AblationRow& row = result.rows[ci * scenes.size() + si];
            sum_p += row.psnr;
            sum_p2 += row.psnr * row.psnr;
            sum_g += row.psnr_gamma;
            sum_s += row.ssim;
        }
        const double n = static_cast<double>(scenes.size());
        AblationSummary summary;
        summary.scenario = scenarios[ci].name;
        summary.mean_psnr = sum_p / n;
        summary.std_psnr = std::sqrt(
            std::max(0.0, sum_p2 / n - summary.mean_psnr * summary.mean_psnr));
        summary.mean_psnr_gamma = sum_g / n;
        summary.mean_ssim = sum_s / n;
        result.summaries.push_back(summary);
    }
    return result;
}

}  // namespace grrhdr
