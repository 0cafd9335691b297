#include "grrhdr/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace grrhdr {

double dynamic_range_nd(double imax, double imin, double emax, double emin) {
    if (!(imax > 0.0) || !(imin > 0.0) || !(emax > 0.0) || !(emin > 0.0))
        throw param_error("dynamic range arguments must be positive");
    if (imax < imin || emax < emin)
        throw param_error("dynamic range maxima must dominate minima");
    return 20.0 * std::log10((imax / imin) * (emax / emin));
}

double dynamic_range_grr(double imax, double imin, double t0, double tr,
                         int u_min, int u_max) {
    if (!(imax > 0.0) || !(imin > 0.0) || !(t0 > 0.0))
        throw param_error("dynamic range arguments must be positive");
    if (imax < imin) throw param_error("imax must be >= imin");
    if (tr < 0.0) throw param_error("tr must be >= 0");
    if (u_min < 1 || u_max < u_min)
        throw param_error("need 1 <= u_min <= u_max");
    const double native = 20.0 * std::log10(imax / imin);
    if (tr == 0.0 || u_max == u_min) return native;
    const double spread =
        1.0 + static_cast<double>(u_max - u_min) / (t0 / tr + (u_min - 1));
    return native + 20.0 * std::log10(spread);
}

DrReport patch_dr_histogram(const std::vector<double>& exposures, int width,
                            int height, const SensorConfig& sensor,
                            const std::vector<int>& sizes) {
    sensor.validate();
    if (width <= 0 || height <= 0 ||
        exposures.size() != static_cast<size_t>(width) * height)
        throw param_error("exposure grid size mismatch");
    for (double e : exposures)
        if (!std::isfinite(e) || e <= 0.0)
            throw param_error("exposures must be positive");
    if (sizes.empty()) throw param_error("no patch sizes given");

    const double native =
        20.0 * std::log10(static_cast<double>(sensor.max_dn()));
    const auto [gmin, gmax] = std::minmax_element(exposures.begin(), exposures.end());

    DrReport report;
    report.global_db = native + 20.0 * std::log10(*gmax / *gmin);

    for (int s : sizes) {
        if (s < 2 || s > width || s > height)
            throw param_error("patch size must be >= 2 and fit in the grid");
        PatchDrStats stats;
        stats.size = s;
        std::vector<double> values;
        values.reserve(static_cast<size_t>(height - s + 1) * (width - s + 1));
        for (int r = 0; r + s <= height; ++r) {
            for (int c = 0; c + s <= width; ++c) {
                double lo = exposures[static_cast<size_t>(r) * width + c];
                double hi = lo;
                for (int dr = 0; dr < s; ++dr) {
                    const double* row =
                        exposures.data() + static_cast<size_t>(r + dr) * width + c;
                    for (int dc = 0; dc < s; ++dc) {
                        lo = std::min(lo, row[dc]);
                        hi = std::max(hi, row[dc]);
                    }
                }
                values.push_back(native + 20.0 * std::log10(hi / lo));
            }
        }
        stats.count = values.size();
        stats.mean_db =
            std::accumulate(values.begin(), values.end(), 0.0) / values.size();
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        stats.p5_db = sorted[static_cast<size_t>(0.05 * (sorted.size() - 1))];
        stats.p95_db = sorted[static_cast<size_t>(0.95 * (sorted.size() - 1))];
        stats.first_bin_db = static_cast<int>(std::floor(sorted.front()));
        const int last_bin = static_cast<int>(std::floor(sorted.back()));
        stats.bins.assign(last_bin - stats.first_bin_db + 1, 0);
        for (double v : values)
            ++stats.bins[static_cast<int>(std::floor(v)) - stats.first_bin_db];
        report.per_size.push_back(std::move(stats));
    }
    return report;
}

double isolated_highlight_density(const RadianceImage& img) {
    img.validate();
    const int W = img.width, H = img.height;
    std::vector<double> lum(img.pixel_count());
    if (img.channels == 1) {
        lum = img.data;
    } else {
        for (size_t i = 0; i < lum.size(); ++i) {
            const double* px = img.data.data() + i * 3;
            lum[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        }
    }
    const double total = std::accumulate(lum.begin(), lum.end(), 0.0);
    if (total <= 0.0)
        throw param_error("highlight density is undefined for an all-zero image");
    for (double& v : lum) v /= total;

    auto at = [&](int r, int c) {
        // mirror boundary
        if (r < 0) r = 0;
        if (r >= H) r = H - 1;
        if (c < 0) c = 0;
        if (c >= W) c = W - 1;
        return lum[static_cast<size_t>(r) * W + c];
    };
    double density = 0.0;
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            const double neg_lap = 4.0 * at(r, c) - at(r - 1, c) - at(r + 1, c)
                                   - at(r, c - 1) - at(r, c + 1);
            if (neg_lap > 0.0) density += neg_lap;
        }
    }
    return density;
}

RadianceImage merge_exposures(const std::vector<Measurement>& frames,
                              const std::vector<double>& times,
                              int low_threshold) {
    if (frames.size() < 2)
        throw param_error("merge needs at least two frames");
    if (frames.size() != times.size())
        throw param_error("frame/time count mismatch");
    for (double t : times)
        if (!std::isfinite(t) || t <= 0.0)
            throw param_error("exposure times must be positive");
    const Measurement& first = frames.front();
    for (const Measurement& m : frames) {
        m.validate();
        if (m.width != first.width || m.height != first.height ||
            m.bit_depth != first.bit_depth)
            throw param_error("merge frames disagree on geometry");
    }
    std::vector<size_t> order(frames.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return times[a] < times[b]; });
    for (size_t i = 1; i < order.size(); ++i)
        if (times[order[i]] == times[order[i - 1]])
            throw param_error("merge exposure times must be distinct");
    if (low_threshold < 0 || low_threshold >= first.max_dn())
        throw param_error("low threshold out of range");

    const int cap = first.max_dn();
    const double mid = cap / 2.0;
    RadianceImage out(first.width, first.height, 1);
    for (size_t i = 0; i < out.pixel_count(); ++i) {
        double wsum = 0.0, est = 0.0;
        for (size_t f = 0; f < frames.size(); ++f) {
            const int dn = frames[f].dn[i];
            if (dn <= low_threshold || dn > cap - 1) continue;
            const double w = 1.0 - std::fabs(dn - mid) / mid;  // tent, peak at mid-scale
            wsum += w;
            est += w * (dn / times[f]);
        }
        if (wsum > 0.0) {
            out.data[i] = est / wsum;
        } else {
            const size_t s = order.front();  // shortest exposure fallback
            out.data[i] = frames[s].dn[i] / times[s];
        }
    }
    return out;
}

namespace {

double psnr_from_mse(double mse) {
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

// Mean SSIM over the valid region with the standard 11-tap Gaussian
// (sigma 1.5) window; falls back to one global uniform window when the
// image is smaller than the kernel.
double ssim_plane(const std::vector<double>& a, const std::vector<double>& b,
                  int W, int H) {
    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    if (W < 11 || H < 11) {
        double ma = 0, mb = 0;
        for (size_t i = 0; i < a.size(); ++i) { ma += a[i]; mb += b[i]; }
        ma /= a.size(); mb /= b.size();
        double va = 0, vb = 0, cov = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            va += (a[i] - ma) * (a[i] - ma);
            vb += (b[i] - mb) * (b[i] - mb);
            cov += (a[i] - ma) * (b[i] - mb);
        }
        va /= a.size(); vb /= b.size(); cov /= a.size();
        return ((2 * ma * mb + C1) * (2 * cov + C2)) /
               ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }

    double kernel[11];
    double ksum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5.0;
        kernel[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        ksum += kernel[i];
    }
    for (double& k : kernel) k /= ksum;

    // Separable filtering of the five moment planes.
    auto blur = [&](const std::vector<double>& src) {
        std::vector<double> tmp(static_cast<size_t>(W) * H, 0.0);
        for (int r = 0; r < H; ++r)
            for (int c = 5; c < W - 5; ++c) {
                double s = 0.0;
                for (int k = -5; k <= 5; ++k)
                    s += kernel[k + 5] * src[static_cast<size_t>(r) * W + c + k];
                tmp[static_cast<size_t>(r) * W + c] = s;
            }
        std::vector<double> dst(tmp.size(), 0.0);
        for (int r = 5; r < H - 5; ++r)
            for (int c = 5; c < W - 5; ++c) {
                double s = 0.0;
                for (int k = -5; k <= 5; ++k)
                    s += kernel[k + 5] * tmp[static_cast<size_t>(r + k) * W + c];
                dst[static_cast<size_t>(r) * W + c] = s;
            }
        return dst;
    };

    const size_t n = a.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (size_t i = 0; i < n; ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const std::vector<double> mu1 = blur(a), mu2 = blur(b);
    const std::vector<double> s11 = blur(aa), s22 = blur(bb), s12 = blur(ab);

    double sum = 0.0;
    size_t count = 0;
    for (int r = 5; r < H - 5; ++r) {
        for (int c = 5; c < W - 5; ++c) {
            const size_t i = static_cast<size_t>(r) * W + c;
            const double m1 = mu1[i], m2 = mu2[i];
            const double v1 = s11[i] - m1 * m1;
            const double v2 = s22[i] - m2 * m2;
            const double cov = s12[i] - m1 * m2;
            sum += ((2 * m1 * m2 + C1) * (2 * cov + C2)) /
                   ((m1 * m1 + m2 * m2 + C1) * (v1 + v2 + C2));
            ++count;
        }
    }
    return sum / count;
}

}  // namespace

FidelityMetrics fidelity_metrics(const RadianceImage& ref,
                                 const RadianceImage& test,
                                 MetricNormalization norm) {
    ref.validate();
    test.validate();
    if (ref.width != test.width || ref.height != test.height ||
        ref.channels != test.channels)
        throw param_error("metric images disagree on geometry");

    double stat = 0.0;
    if (norm == MetricNormalization::Max) {
        for (double v : ref.data) stat = std::max(stat, v);
    } else {
        stat = std::accumulate(ref.data.begin(), ref.data.end(), 0.0) /
               ref.data.size();
    }
    if (!(stat > 0.0))
        throw param_error("reference image has no positive statistic");

    const size_t N = ref.data.size();
    std::vector<double> a(N), b(N);
    for (size_t i = 0; i < N; ++i) {
        a[i] = std::clamp(ref.data[i] / stat, 0.0, 1.0);
        b[i] = std::clamp(test.data[i] / stat, 0.0, 1.0);
    }

    FidelityMetrics out;
    double mse = 0.0, mse_g = 0.0;
    constexpr double inv_gamma = 1.0 / 2.2;
    for (size_t i = 0; i < N; ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
        const double dg = std::pow(a[i], inv_gamma) - std::pow(b[i], inv_gamma);
        mse_g += dg * dg;
    }
    out.psnr_db = psnr_from_mse(mse / N);
    out.psnr_gamma_db = psnr_from_mse(mse_g / N);

    if (ref.channels == 3) {
        std::vector<double> la(ref.pixel_count()), lb(ref.pixel_count());
        for (size_t i = 0; i < la.size(); ++i) {
            la[i] = 0.299 * a[i * 3] + 0.587 * a[i * 3 + 1] + 0.114 * a[i * 3 + 2];
            lb[i] = 0.299 * b[i * 3] + 0.587 * b[i * 3 + 1] + 0.114 * b[i * 3 + 2];
        }
        out.ssim = ssim_plane(la, lb, ref.width, ref.height);
    } else {
        out.ssim = ssim_plane(a, b, ref.width, ref.height);
    }
    return out;
}

}  // namespace grrhdr
