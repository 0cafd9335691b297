#pragma once

#include <cstdint>
#include <vector>

#include "grrhdr/calib.hpp"
#include "grrhdr/image.hpp"
#include "grrhdr/permutation.hpp"
#include "grrhdr/sensor.hpp"
#include "grrhdr/shutter.hpp"

namespace grrhdr {

// Linear map from a scene-plane vector to sensor DN (gain folded in).
class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual size_t scene_size() const = 0;
    virtual size_t sensor_size() const = 0;
    virtual void apply(const std::vector<double>& x, std::vector<double>& y) const = 0;
    virtual void apply_adjoint(const std::vector<double>& y, std::vector<double>& x) const = 0;
    // Lipschitz constant of x -> A^T E A x for the given validity mask.
    virtual double lipschitz(const std::vector<uint8_t>& valid) const = 0;
    // Zero out sensor pixels the operator itself declares unusable.
    virtual void mask_invalid(std::vector<uint8_t>& valid) const { (void)valid; }
};

// gain * Lambda on the scene grid, Lambda = P^T S P. Works on unshuffled
// measurements; diagonal, so the Lipschitz constant is exact.
class SyntheticOperator final : public LinearOperator {
public:
    SyntheticOperator(const ShutterProfile& shutter, const PermutationMap& optics,
                      double gain, int width);

    size_t scene_size() const override { return diag_.size(); }
    size_t sensor_size() const override { return diag_.size(); }
    void apply(const std::vector<double>& x, std::vector<double>& y) const override;
    void apply_adjoint(const std::vector<double>& y, std::vector<double>& x) const override;
    double lipschitz(const std::vector<uint8_t>& valid) const override;

    const std::vector<double>& diagonal() const { return diag_; }

private:
    std::vector<double> diag_;
};

// Calibrated sparse matrix with the shutter's per-row exposure folded in.
// The Lipschitz constant comes from power iteration on A^T E A
// (20 iterations or 1% relative tolerance, fixed internal seed).
class SparseOperator final : public LinearOperator {
public:
    SparseOperator(const SparseSystemMatrix& matrix, const ShutterProfile& shutter,
                   int sensor_width);

    size_t scene_size() const override { return n_scene_; }
    size_t sensor_size() const override { return n_sensor_; }
    void apply(const std::vector<double>& x, std::vector<double>& y) const override;
    void apply_adjoint(const std::vector<double>& y, std::vector<double>& x) const override;
    double lipschitz(const std::vector<uint8_t>& valid) const override;
    void mask_invalid(std::vector<uint8_t>& valid) const override;

private:
    size_t n_scene_ = 0, n_sensor_ = 0;
    std::vector<SparseEntry> entries_;      // flux pre-multiplied by exposure
    std::vector<uint32_t> invalid_;
};

// argmin over x >= 0 of 1/2 ||E(Ax - b)||^2 + tau * TV(x).
// The measurement must be laid out on the operator's sensor grid (for the
// synthetic operator that means unshuffled, scene order).
struct InverseProblem {
    const LinearOperator* op = nullptr;
    const Measurement* measurement = nullptr;
    int scene_width = 0;
    int scene_height = 0;
    double tau = 0.0;
    int max_iters = 300;
    double rel_tol = 1e-7;
    int tv_inner_iters = 10;

    void validate() const;
};

// One color-plane block of a joint RGB problem. channel selects which
// scene channel the operator observes; two blocks may share a channel
// (the Bayer green pair).
struct ColorBlock {
    const LinearOperator* op = nullptr;
    const Measurement* measurement = nullptr;
    int channel = 0;
};

struct ColorInverseProblem {
    std::vector<ColorBlock> blocks;
    int scene_width = 0;
    int scene_height = 0;
    double tau = 0.0;
    int max_iters = 300;
    double rel_tol = 1e-7;
    int tv_inner_iters = 10;

    void validate() const;
};

struct ConvergenceReport {
    int iterations = 0;
    bool converged = false;
    double final_rel_change = 0.0;
    double lipschitz = 0.0;
    std::vector<double> objective;   // objective[0] is the starting point
    std::vector<double> rel_change;  // one entry per iteration
};

struct SolveResult {
    RadianceImage image;
    ConvergenceReport report;
};

// Masked data-term gradient A^T E (Ax - b) for a single-channel problem.
RadianceImage data_grad(const RadianceImage& x, const InverseProblem& p);

double objective(const RadianceImage& x, const InverseProblem& p);
double objective(const RadianceImage& x, const ColorInverseProblem& p);

// Anisotropic TV semi-norm: sum of |forward difference| along rows and
// columns of one plane.
double tv_norm(const std::vector<double>& v, int width, int height);
double tv_norm(const RadianceImage& img);  // sum over channels

// Approximate prox of weight * TV via a parallel proximal scheme: the
// quadratic coupling block plus four disjoint pairwise-difference blocks
// (even/odd, horizontal/vertical), averaged each sweep. weight = 0 or
// inner_iters = 0 returns the input unchanged.
std::vector<double> tv_prox(const std::vector<double>& y, int width, int height,
                            double weight, int inner_iters = 10);
RadianceImage tv_prox(const RadianceImage& y, double weight, int inner_iters = 10);

// BT.601 full-range luma-chroma transform and its exact inverse.
RadianceImage color_transform(const RadianceImage& x, Direction dir);

SolveResult fista_solve(const InverseProblem& p,
                        const RadianceImage* x0 = nullptr);
SolveResult fista_solve_color(const ColorInverseProblem& p,
                              const RadianceImage* x0 = nullptr);

}  // namespace grrhdr
