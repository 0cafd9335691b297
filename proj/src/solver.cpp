#include "grrhdr/solver.hpp"

#include <algorithm>
#include <cmath>

#include "grrhdr/rng.hpp"

namespace grrhdr {

SyntheticOperator::SyntheticOperator(const ShutterProfile& shutter,
                                     const PermutationMap& optics, double gain,
                                     int width) {
    if (!std::isfinite(gain) || gain <= 0.0)
        throw param_error("gain must be positive");
    const std::vector<double> lambda = conjugated_exposure(shutter, optics, width);
    diag_.resize(lambda.size());
    for (size_t k = 0; k < lambda.size(); ++k) diag_[k] = gain * lambda[k];
}

void SyntheticOperator::apply(const std::vector<double>& x,
                              std::vector<double>& y) const {
    if (x.size() != diag_.size())
        throw param_error("operator input size mismatch");
    y.resize(diag_.size());
    for (size_t i = 0; i < diag_.size(); ++i) y[i] = diag_[i] * x[i];
}

void SyntheticOperator::apply_adjoint(const std::vector<double>& y,
                                      std::vector<double>& x) const {
    apply(y, x);  // diagonal, self-adjoint
}

double SyntheticOperator::lipschitz(const std::vector<uint8_t>& valid) const {
    double best = 0.0;
    for (size_t i = 0; i < diag_.size(); ++i) {
        if (!valid.empty() && !valid[i]) continue;
        best = std::max(best, diag_[i] * diag_[i]);
    }
    return best;
}

SparseOperator::SparseOperator(const SparseSystemMatrix& matrix,
                               const ShutterProfile& shutter, int sensor_width) {
    matrix.validate();
    if (sensor_width <= 0 || matrix.n_sensor % sensor_width != 0)
        throw param_error("sensor width does not divide the pixel count");
    if (static_cast<int>(matrix.n_sensor) / sensor_width != shutter.rows)
        throw param_error("shutter row count does not match the sensor grid");
    n_scene_ = matrix.n_scene;
    n_sensor_ = matrix.n_sensor;
    entries_ = matrix.entries;
    invalid_ = matrix.invalid_pixels;
    for (SparseEntry& e : entries_) {
        const int row = static_cast<int>(e.sensor) / sensor_width;
        e.flux = e.flux * shutter.exposure_row(row);
    }
}

void SparseOperator::apply(const std::vector<double>& x,
                           std::vector<double>& y) const {
    if (x.size() != n_scene_)
        throw param_error("operator input size mismatch");
    y.assign(n_sensor_, 0.0);
    for (const SparseEntry& e : entries_) y[e.sensor] += e.flux * x[e.scene];
}

void SparseOperator::apply_adjoint(const std::vector<double>& y,
                                   std::vector<double>& x) const {
    if (y.size() != n_sensor_)
        throw param_error("operator adjoint input size mismatch");
    x.assign(n_scene_, 0.0);
    for (const SparseEntry& e : entries_) x[e.scene] += e.flux * y[e.sensor];
}

double SparseOperator::lipschitz(const std::vector<uint8_t>& valid) const {
    if (entries_.empty()) return 0.0;
    std::vector<double> v(n_scene_), av(n_sensor_), w(n_scene_);
    Rng rng(0x5eed5eed5eed5eedull);
    for (double& t : v) t = rng.gaussian();
    double nrm = 0.0;
    for (double t : v) nrm += t * t;
    nrm = std::sqrt(nrm);
    for (double& t : v) t /= nrm;

    double lam = 0.0, prev = 0.0;
    for (int it = 0; it < 20; ++it) {
        apply(v, av);
        if (!valid.empty())
            for (size_t i = 0; i < av.size(); ++i)
                if (!valid[i]) av[i] = 0.0;
        apply_adjoint(av, w);
        lam = 0.0;
        for (double t : w) lam += t * t;
        lam = std::sqrt(lam);
        if (lam <= 0.0) return 0.0;
        for (size_t i = 0; i < w.size(); ++i) v[i] = w[i] / lam;
        if (it > 0 && std::fabs(lam - prev) <= 0.01 * lam) break;
        prev = lam;
    }
    // 5% headroom: the estimate approaches the true constant from below.
    return 1.05 * lam;
}

void SparseOperator::mask_invalid(std::vector<uint8_t>& valid) const {
    if (valid.size() != n_sensor_)
        throw param_error("validity mask size mismatch");
    for (uint32_t i : invalid_) valid[i] = 0;
}

void InverseProblem::validate() const {
    if (!op || !measurement)
        throw param_error("inverse problem is missing its operator or measurement");
    measurement->validate();
    if (op->sensor_size() != measurement->pixel_count())
        throw param_error("operator and measurement disagree on sensor size");
    if (scene_width <= 0 || scene_height <= 0 ||
        op->scene_size() != static_cast<size_t>(scene_width) * scene_height)
        throw param_error("scene dimensions do not match the operator");
    if (!std::isfinite(tau) || tau < 0.0)
        throw param_error("tau must be >= 0");
    if (max_iters < 1) throw param_error("max_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw param_error("rel_tol must be > 0");
    if (tv_inner_iters < 0) throw param_error("tv_inner_iters must be >= 0");
}

void ColorInverseProblem::validate() const {
    if (blocks.empty()) throw param_error("color problem has no blocks");
    if (scene_width <= 0 || scene_height <= 0)
        throw param_error("scene dimensions must be positive");
    for (const ColorBlock& b : blocks) {
        if (!b.op || !b.measurement)
            throw param_error("color block is missing its operator or measurement");
        b.measurement->validate();
        if (b.op->sensor_size() != b.measurement->pixel_count())
            throw param_error("block operator and measurement disagree on size");
        if (b.op->scene_size() != static_cast<size_t>(scene_width) * scene_height)
            throw param_error("block scene size mismatch");
        if (b.channel < 0 || b.channel > 2)
            throw param_error("block channel must be 0, 1, or 2");
    }
    if (!std::isfinite(tau) || tau < 0.0)
        throw param_error("tau must be >= 0");
    if (max_iters < 1) throw param_error("max_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw param_error("rel_tol must be > 0");
    if (tv_inner_iters < 0) throw param_error("tv_inner_iters must be >= 0");
}

double tv_norm(const std::vector<double>& v, int width, int height) {
    if (v.size() != static_cast<size_t>(width) * height)
        throw param_error("plane size mismatch");
    double s = 0.0;
    for (int r = 0; r < height; ++r) {
        const double* row = v.data() + static_cast<size_t>(r) * width;
        for (int c = 0; c + 1 < width; ++c) s += std::fabs(row[c + 1] - row[c]);
        if (r + 1 < height) {
            const double* next = row + width;
            for (int c = 0; c < width; ++c) s += std::fabs(next[c] - row[c]);
        }
    }
    return s;
}

double tv_norm(const RadianceImage& img) {
    if (img.channels == 1) return tv_norm(img.data, img.width, img.height);
    double s = 0.0;
    std::vector<double> plane(img.pixel_count());
    for (int ch = 0; ch < img.channels; ++ch) {
        for (size_t i = 0; i < plane.size(); ++i)
            plane[i] = img.data[i * img.channels + ch];
        s += tv_norm(plane, img.width, img.height);
    }
    return s;
}

namespace {

inline double soft(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

// Pairwise shrinkage for one disjoint difference group: the prox of
// c * sum |u_a - u_b| keeps each pair's mean and soft-thresholds the
// difference by 2c.
void pair_prox(std::vector<double>& p, const std::vector<std::pair<uint32_t, uint32_t>>& pairs,
               double c) {
    for (const auto& [a, b] : pairs) {
        const double mean = 0.5 * (p[a] + p[b]);
        const double diff = soft(p[a] - p[b], 2.0 * c);
        p[a] = mean + 0.5 * diff;
        p[b] = mean - 0.5 * diff;
    }
}

}  // namespace

std::vector<double> tv_prox(const std::vector<double>& y, int width, int height,
                            double weight, int inner_iters) {
    if (width <= 0 || height <= 0 ||
        y.size() != static_cast<size_t>(width) * height)
        throw param_error("plane size mismatch");
    if (!std::isfinite(weight) || weight < 0.0)
        throw param_error("TV weight must be >= 0");
    if (weight == 0.0 || inner_iters <= 0) return y;
    // A constant plane is already the exact prox for every weight.
    if (std::all_of(y.begin(), y.end(),
                    [&](double v) { return v == y.front(); }))
        return y;

    // Five-block parallel proximal scheme: quadratic coupling to y plus the
    // four disjoint difference groups (even/odd starts, horizontal/vertical).
    std::array<std::vector<std::pair<uint32_t, uint32_t>>, 4> groups;
    for (int r = 0; r < height; ++r)
        for (int c = 0; c + 1 < width; c += 2)
            groups[0].push_back({r * width + c, r * width + c + 1});
    for (int r = 0; r < height; ++r)
        for (int c = 1; c + 1 < width; c += 2)
            groups[1].push_back({r * width + c, r * width + c + 1});
    for (int r = 0; r + 1 < height; r += 2)
        for (int c = 0; c < width; ++c)
            groups[2].push_back({r * width + c, (r + 1) * width + c});
    for (int r = 1; r + 1 < height; r += 2)
        for (int c = 0; c < width; ++c)
            groups[3].push_back({r * width + c, (r + 1) * width + c});

    constexpr int K = 5;
    const double c = K * weight;  // per-block prox parameter (gamma = 1, w_k = 1/K)
    std::array<std::vector<double>, K> z;
    for (auto& zk : z) zk = y;
    std::vector<double> x = y;
    std::vector<double> p(y.size()), pbar(y.size());

    for (int it = 0; it < inner_iters; ++it) {
        std::fill(pbar.begin(), pbar.end(), 0.0);
        for (int k = 0; k < K; ++k) {
            p = z[k];
            if (k == 0) {
                for (size_t i = 0; i < p.size(); ++i)
                    p[i] = (p[i] + K * y[i]) / (K + 1.0);
            } else {
                pair_prox(p, groups[k - 1], c);
            }
            for (size_t i = 0; i < p.size(); ++i) {
                pbar[i] += p[i] / K;
                z[k][i] -= p[i];  // z_k + 2*pbar - x - p_k, completed below
            }
        }
        for (int k = 0; k < K; ++k)
            for (size_t i = 0; i < x.size(); ++i)
                z[k][i] += 2.0 * pbar[i] - x[i];
        x = pbar;
    }
    return x;
}

RadianceImage tv_prox(const RadianceImage& y, double weight, int inner_iters) {
    RadianceImage out = y;
    if (y.channels == 1) {
        out.data = tv_prox(y.data, y.width, y.height, weight, inner_iters);
        return out;
    }
    std::vector<double> plane(y.pixel_count());
    for (int ch = 0; ch < y.channels; ++ch) {
        for (size_t i = 0; i < plane.size(); ++i)
            plane[i] = y.data[i * y.channels + ch];
        plane = tv_prox(plane, y.width, y.height, weight, inner_iters);
        for (size_t i = 0; i < plane.size(); ++i)
            out.data[i * y.channels + ch] = plane[i];
    }
    return out;
}

namespace {

constexpr double kR = 0.299, kG = 0.587, kB = 0.114;

inline void ycbcr_fwd(double* px) {
    const double y = kR * px[0] + kG * px[1] + kB * px[2];
    const double cb = (px[2] - y) / (2.0 * (1.0 - kB));
    const double cr = (px[0] - y) / (2.0 * (1.0 - kR));
    px[0] = y; px[1] = cb; px[2] = cr;
}

inline void ycbcr_inv(double* px) {
    const double y = px[0], cb = px[1], cr = px[2];
    const double r = y + 2.0 * (1.0 - kR) * cr;
    const double b = y + 2.0 * (1.0 - kB) * cb;
    px[0] = r;
    px[2] = b;
    px[1] = (y - kR * r - kB * b) / kG;
}

}  // namespace

RadianceImage color_transform(const RadianceImage& x, Direction dir) {
    if (x.channels != 3)
        throw param_error("color transform expects a 3-channel image");
    if (x.data.size() != x.pixel_count() * 3)
        throw param_error("image buffer size mismatch");
    RadianceImage out = x;
    for (size_t i = 0; i < out.pixel_count(); ++i) {
        double* px = out.data.data() + i * 3;
        if (dir == Direction::Forward) ycbcr_fwd(px);
        else ycbcr_inv(px);
    }
    return out;
}

namespace {

struct Block {
    const LinearOperator* op = nullptr;
    int channel = 0;
    std::vector<double> b;
    std::vector<uint8_t> valid;
    mutable std::vector<double> sensor_buf;
    mutable std::vector<double> scene_buf;
};

Block make_block(const LinearOperator* op, const Measurement* m, int channel) {
    Block blk;
    blk.op = op;
    blk.channel = channel;
    blk.b.assign(m->dn.begin(), m->dn.end());
    if (m->erasure.empty()) blk.valid.assign(m->dn.size(), 1);
    else blk.valid = m->erasure;
    op->mask_invalid(blk.valid);
    blk.sensor_buf.resize(op->sensor_size());
    blk.scene_buf.resize(op->scene_size());
    return blk;
}

void extract_plane(const std::vector<double>& v, int channels, int ch,
                   std::vector<double>& plane) {
    const size_t n = v.size() / channels;
    plane.resize(n);
    if (channels == 1) { plane = v; return; }
    for (size_t i = 0; i < n; ++i) plane[i] = v[i * channels + ch];
}

void store_plane(const std::vector<double>& plane, int channels, int ch,
                 std::vector<double>& v) {
    if (channels == 1) { v = plane; return; }
    for (size_t i = 0; i < plane.size(); ++i) v[i * channels + ch] = plane[i];
}

class Engine {
public:
    Engine(std::vector<Block> blocks, int channels, int W, int H, double tau,
           int inner)
        : blocks_(std::move(blocks)), channels_(channels), W_(W), H_(H),
          tau_(tau), inner_(inner) {}

    double lipschitz() const {
        std::vector<double> per_channel(channels_, 0.0);
        for (const Block& b : blocks_)
            per_channel[b.channel] += b.op->lipschitz(b.valid);
        double L = 0.0;
        for (double v : per_channel) L = std::max(L, v);
        return L;
    }

    double objective(const std::vector<double>& v) const {
        double s = 0.0;
        for (const Block& b : blocks_) {
            extract_plane(v, channels_, b.channel, plane_);
            b.op->apply(plane_, b.sensor_buf);
            for (size_t i = 0; i < b.sensor_buf.size(); ++i) {
                if (!b.valid[i]) continue;
                const double d = b.sensor_buf[i] - b.b[i];
                s += 0.5 * d * d;
            }
        }
        if (tau_ > 0.0) {
            if (channels_ == 3) {
                work_ = v;
                for (size_t i = 0; i < work_.size(); i += 3) ycbcr_fwd(&work_[i]);
                for (int ch = 0; ch < 3; ++ch) {
                    extract_plane(work_, 3, ch, plane_);
                    s += tau_ * tv_norm(plane_, W_, H_);
                }
            } else {
                s += tau_ * tv_norm(v, W_, H_);
            }
        }
        return s;
    }

    void gradient(const std::vector<double>& v, std::vector<double>& g) const {
        g.assign(v.size(), 0.0);
        for (const Block& b : blocks_) {
            extract_plane(v, channels_, b.channel, plane_);
            b.op->apply(plane_, b.sensor_buf);
            for (size_t i = 0; i < b.sensor_buf.size(); ++i)
                b.sensor_buf[i] = b.valid[i] ? b.sensor_buf[i] - b.b[i] : 0.0;
            b.op->apply_adjoint(b.sensor_buf, b.scene_buf);
            if (channels_ == 1) {
                for (size_t i = 0; i < g.size(); ++i) g[i] += b.scene_buf[i];
            } else {
                for (size_t i = 0; i < b.scene_buf.size(); ++i)
                    g[i * channels_ + b.channel] += b.scene_buf[i];
            }
        }
    }

    // prox of (tau/L)*TV (in luma-chroma space for color), then the
    // nonnegativity projection.
    void prox(std::vector<double>& v, double L) const {
        if (tau_ > 0.0 && inner_ > 0) {
            const double w = tau_ / L;
            if (channels_ == 3) {
                for (size_t i = 0; i < v.size(); i += 3) ycbcr_fwd(&v[i]);
                for (int ch = 0; ch < 3; ++ch) {
                    extract_plane(v, 3, ch, plane_);
                    plane_ = tv_prox(plane_, W_, H_, w, inner_);
                    store_plane(plane_, 3, ch, v);
                }
                for (size_t i = 0; i < v.size(); i += 3) ycbcr_inv(&v[i]);
            } else {
                v = tv_prox(v, W_, H_, w, inner_);
            }
        }
        for (double& t : v) if (t < 0.0) t = 0.0;
    }

    SolveResult run(int max_iters, double rel_tol, const RadianceImage* x0) {
        const size_t N = static_cast<size_t>(W_) * H_ * channels_;
        double L = lipschitz();
        if (L <= 0.0) {
            if (tau_ <= 0.0)
                throw convergence_error(
                    "every measurement sample is erased and tau = 0; "
                    "the problem does not constrain a solution");
            L = 1.0;
        }

        std::vector<double> x(N, 0.0);
        if (x0) {
            if (x0->width != W_ || x0->height != H_ || x0->channels != channels_)
                throw param_error("x0 dimensions do not match the problem");
            x0->validate();
            x = x0->data;
        }

        ConvergenceReport rep;
        rep.lipschitz = L;
        double obj_x = objective(x);
        rep.objective.push_back(obj_x);
        std::vector<double> best = x;
        double best_obj = obj_x;

        std::vector<double> y = x, z(N), g(N);
        double t = 1.0;
        for (int k = 1; k <= max_iters; ++k) {
            gradient(y, g);
            for (size_t i = 0; i < N; ++i) z[i] = y[i] - g[i] / L;
            prox(z, L);

            double dn2 = 0.0, xn2 = 0.0;
            for (size_t i = 0; i < N; ++i) {
                const double d = z[i] - x[i];
                dn2 += d * d;
                xn2 += x[i] * x[i];
            }
            const double rel = std::sqrt(dn2) / std::max(std::sqrt(xn2), 1e-30);
            const double obj_z = objective(z);
            rep.objective.push_back(obj_z);
            rep.rel_change.push_back(rel);
            if (obj_z < best_obj) { best_obj = obj_z; best = z; }

            // Adaptive restart: an objective increase kills the momentum.
            const bool restart = obj_z > obj_x;
            const double t_next =
                restart ? 1.0 : 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            if (restart) {
                y = z;
            } else {
                const double beta = (t - 1.0) / t_next;
                for (size_t i = 0; i < N; ++i) y[i] = z[i] + beta * (z[i] - x[i]);
            }
            x.swap(z);
            obj_x = obj_z;
            t = t_next;
            rep.iterations = k;
            rep.final_rel_change = rel;
            if (rel <= rel_tol) {
                rep.converged = true;
                break;
            }
        }

        SolveResult out;
        out.image = RadianceImage(W_, H_, channels_);
        out.image.data = std::move(best);
        out.report = std::move(rep);
        return out;
    }

private:
    std::vector<Block> blocks_;
    int channels_, W_, H_;
    double tau_;
    int inner_;
    mutable std::vector<double> plane_;
    mutable std::vector<double> work_;
};

}  // namespace

RadianceImage data_grad(const RadianceImage& x, const InverseProblem& p) {
    p.validate();
    if (x.width != p.scene_width || x.height != p.scene_height || x.channels != 1)
        throw param_error("gradient point does not match the problem geometry");
    std::vector<Block> blocks;
    blocks.push_back(make_block(p.op, p.measurement, 0));
    Engine eng(std::move(blocks), 1, p.scene_width, p.scene_height, 0.0, 0);
    RadianceImage g(p.scene_width, p.scene_height, 1);
    eng.gradient(x.data, g.data);
    return g;
}

double objective(const RadianceImage& x, const InverseProblem& p) {
    p.validate();
    if (x.width != p.scene_width || x.height != p.scene_height || x.channels != 1)
        throw param_error("point does not match the problem geometry");
    std::vector<Block> blocks;
    blocks.push_back(make_block(p.op, p.measurement, 0));
    Engine eng(std::move(blocks), 1, p.scene_width, p.scene_height, p.tau,
               p.tv_inner_iters);
    return eng.objective(x.data);
}

double objective(const RadianceImage& x, const ColorInverseProblem& p) {
    p.validate();
    if (x.width != p.scene_width || x.height != p.scene_height || x.channels != 3)
        throw param_error("point does not match the problem geometry");
    std::vector<Block> blocks;
    for (const ColorBlock& b : p.blocks)
        blocks.push_back(make_block(b.op, b.measurement, b.channel));
    Engine eng(std::move(blocks), 3, p.scene_width, p.scene_height, p.tau,
               p.tv_inner_iters);
    return eng.objective(x.data);
}

SolveResult fista_solve(const InverseProblem& p, const RadianceImage* x0) {
    p.validate();
    std::vector<Block> blocks;
    blocks.push_back(make_block(p.op, p.measurement, 0));
    Engine eng(std::move(blocks), 1, p.scene_width, p.scene_height, p.tau,
               p.tv_inner_iters);
    return eng.run(p.max_iters, p.rel_tol, x0);
}

SolveResult fista_solve_color(const ColorInverseProblem& p,
                              const RadianceImage* x0) {
    p.validate();
    std::vector<Block> blocks;
    for (const ColorBlock& b : p.blocks)
        blocks.push_back(make_block(b.op, b.measurement, b.channel));
    Engine eng(std::move(blocks), 3, p.scene_width, p.scene_height, p.tau,
               p.tv_inner_iters);
    return eng.run(p.max_iters, p.rel_tol, x0);
}

}  // namespace grrhdr
