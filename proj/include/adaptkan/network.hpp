#pragma once

#include "adaptkan/adapt.hpp"
#include "adaptkan/spline.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace adaptkan {

/// Batch-major matrix: one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class InitMode {
    kan,     ///< phi = w_b silu(x) + w_s spline(x), both scales trained
    linear,  ///< phi = spline(x), started as a noisy line
};

std::string_view to_string(InitMode mode) noexcept;
InitMode parse_init_mode(std::string_view text);

/// How domains follow the data during recording forward passes.
enum class AdaptMode {
    automatic,  ///< histogram decision on every recording pass
    manual,     ///< only when a forward pass asks for a forced refit
    off,
};

double silu(double x) noexcept;

struct InitOptions {
    InitMode mode = InitMode::kan;
    /// Standard deviation of the Gaussian coefficient noise.
    double noise = 0.5;
    std::uint64_t seed = 0;
    int omega = 3;
    double domain_lo = -1.0;
    double domain_hi = 1.0;
    /// Linear mode: fixed slope for every activation instead of U(-1, 1).
    std::optional<double> slope;
    AdaptConfig adapt;
};

/// Per-layer forward state kept for the backward pass.
struct LayerCache {
    Matrix input;                             // B x n
    std::vector<Matrix> input_tangent;        // D of B x n
    std::vector<SplineBasis> basis;           // B*n, index b*n + j
    std::vector<SplineBasis> dbasis;
    std::vector<SplineBasis> d2basis;
    std::vector<double> activation;           // B*m*n, index (b*m + i)*n + j
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    Matrix output;
    std::vector<Matrix> output_tangent;
};

struct LayerGrad {
    std::vector<std::vector<double>> coef;  // per input feature, rows x weights
    std::vector<double> base_scale;         // m*n, index i*n + j (kan mode only)
    std::vector<double> spline_scale;
};

struct NetGrad {
    std::vector<LayerGrad> layers;
    Matrix input;
    std::vector<Matrix> input_tangent;
};

/// One KAN layer: output i = sum_j phi_ij(x_j), with an adaptive grid and
/// histogram per input feature.
class KanLayer {
public:
    KanLayer(std::size_t inputs, std::size_t outputs, const GridDomain& domain,
             InitMode mode, double alpha);

    std::size_t inputs() const noexcept { return features_.size(); }
    std::size_t outputs() const noexcept { return outputs_; }
    InitMode init_mode() const noexcept { return mode_; }

    FeatureState& feature(std::size_t j) { return features_.at(j); }
    const FeatureState& feature(std::size_t j) const { return features_.at(j); }

    /// m x n, index i*n + j. Fixed at (0, 1) in linear mode.
    std::vector<double>& base_scale() noexcept { return base_scale_; }
    const std::vector<double>& base_scale() const noexcept { return base_scale_; }
    std::vector<double>& spline_scale() noexcept { return spline_scale_; }
    const std::vector<double>& spline_scale() const noexcept { return spline_scale_; }

    /// Single activation phi_ij at z.
    double activation(std::size_t i, std::size_t j, double z) const;

    /// Evaluates the layer; fills `cache` when given. `tangents` are
    /// directional derivatives of the input (each B x n); their images are
    /// written to `out_tangents`.
    Matrix evaluate(const Matrix& x, LayerCache* cache,
                    std::span<const Matrix> tangents = {},
                    std::vector<Matrix>* out_tangents = nullptr) const;

private:
    std::size_t outputs_;
    InitMode mode_;
    std::vector<FeatureState> features_;
    std::vector<double> base_scale_;
    std::vector<double> spline_scale_;
};

struct ForwardOptions {
    /// Update histograms (and adapt, per the network's mode) before each
    /// layer evaluates.
    bool record = false;
    /// Force a manual adapt of every feature from this batch.
    bool manual_adapt = false;
};

/// Counters for domain changes made during recording passes.
struct AdaptStats {
    std::size_t events = 0;
    double max_residual = 0.0;
    std::size_t rank_deficient = 0;
};

class AdaptKanNet {
public:
    AdaptKanNet() = default;
    AdaptKanNet(std::vector<KanLayer> layers, AdaptConfig adapt);

    /// Builds a network with widths[0] inputs and widths.back() outputs.
    /// Deterministic for a given seed.
    static AdaptKanNet init(std::span<const std::size_t> widths, const InitOptions& options);

    std::size_t num_layers() const noexcept { return layers_.size(); }
    std::size_t input_width() const;
    std::size_t output_width() const;
    KanLayer& layer(std::size_t l) { return layers_.at(l); }
    const KanLayer& layer(std::size_t l) const { return layers_.at(l); }

    const AdaptConfig& adapt_config() const noexcept { return adapt_; }
    /// Also pushes alpha into every histogram.
    void set_adapt_config(const AdaptConfig& cfg);
    AdaptMode adapt_mode() const noexcept { return mode_; }
    void set_adapt_mode(AdaptMode mode) noexcept { mode_ = mode; }

    const AdaptStats& adapt_stats() const noexcept { return stats_; }
    void reset_adapt_stats() noexcept { stats_ = {}; }

    /// Training pass. With options.record each layer first folds its inputs
    /// into the histograms, then adapts (update -> decide -> apply) before
    /// evaluating. Throws NumericalError carrying the layer index when
    /// activations become non-finite, ConfigError on width mismatch.
    Matrix forward(const Matrix& x, const ForwardOptions& options,
                   ForwardCache* cache = nullptr,
                   std::span<const Matrix> tangents = {});

    /// Inference pass; never touches histograms or domains.
    Matrix predict(const Matrix& x, ForwardCache* cache = nullptr,
                   std::span<const Matrix> tangents = {}) const;

    /// Reverse pass through a cached forward. `grad_out_tangent`, when not
    /// empty, holds gradients w.r.t. the cached output tangents. A positive
    /// `sparsity_lambda` adds the gradient of sparsity_penalty().
    NetGrad backward(const ForwardCache& cache, const Matrix& grad_out,
                     std::span<const Matrix> grad_out_tangent = {},
                     double sparsity_lambda = 0.0) const;

    /// lambda times the mean over all activations of the batch-mean |phi|.
    double sparsity_penalty(const ForwardCache& cache, double lambda) const;

    /// Refines every feature grid to `new_omega` intervals. Returns the
    /// largest refit residual.
    double refine_all(int new_omega);

    /// decide + apply_adapt on every feature. Returns the number of changes.
    std::size_t adapt_all();

    /// Trainable parameters in a fixed order; gradient_blocks() matches it.
    std::vector<std::span<double>> parameter_blocks();
    std::size_t num_parameters() const;

private:
    void record_layer(std::size_t l, const Matrix& x, bool manual);

    std::vector<KanLayer> layers_;
    AdaptConfig adapt_;
    AdaptMode mode_ = AdaptMode::automatic;
    AdaptStats stats_;
};

/// Gradient blocks matching AdaptKanNet::parameter_blocks() of `net`.
std::vector<std::span<const double>> gradient_blocks(const AdaptKanNet& net, const NetGrad& grad);

}  // namespace adaptkan
