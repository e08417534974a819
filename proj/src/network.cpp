#include "adaptkan/network.hpp"

#include "adaptkan/errors.hpp"

#include <cmath>
#include <random>
#include <string>

namespace adaptkan {

namespace {

struct SiluDerivs {
    double value;
    double d1;
    double d2;
};

SiluDerivs silu_derivs(double x) noexcept {
    const double sig = 1.0 / (1.0 + std::exp(-x));
    return {x * sig, sig * (1.0 + x * (1.0 - sig)),
            sig * (1.0 - sig) * (2.0 + x * (1.0 - 2.0 * sig))};
}

double sign(double v) noexcept {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

// Reverse pass through one layer. `grad_y` is B x m, `grad_u` holds one
// B x m matrix per cached tangent direction (or is empty). `sparsity`
// is the per-activation weight of the L1 term (lambda / (B * activations)).
void layer_backward(const KanLayer& layer, const LayerCache& cache,
                    const Matrix& grad_y, std::span<const Matrix> grad_u,
                    double sparsity, LayerGrad& grad, Matrix& grad_x,
                    std::vector<Matrix>& grad_t) {
    const auto batch = static_cast<std::size_t>(cache.input.rows());
    const std::size_t n = layer.inputs();
    const std::size_t m = layer.outputs();
    const std::size_t dirs = cache.input_tangent.size();
    const bool has_gu = !grad_u.empty();
    const bool trainable_scales = layer.init_mode() == InitMode::kan;

    grad.coef.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        grad.coef[j].assign(layer.feature(j).coef.size(), 0.0);
    }
    if (trainable_scales) {
        grad.base_scale.assign(m * n, 0.0);
        grad.spline_scale.assign(m * n, 0.0);
    } else {
        grad.base_scale.clear();
        grad.spline_scale.clear();
    }
    grad_x = Matrix::Zero(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(n));
    grad_t.assign(dirs, Matrix::Zero(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(n)));

    const auto& wb_all = layer.base_scale();
    const auto& ws_all = layer.spline_scale();

    for (std::size_t b = 0; b < batch; ++b) {
        const auto rb = static_cast<Eigen::Index>(b);
        for (std::size_t j = 0; j < n; ++j) {
            const auto cj = static_cast<Eigen::Index>(j);
            const FeatureState& feat = layer.feature(j);
            const std::size_t width = feat.domain().num_weights();
            const SplineBasis& bas = cache.basis[b * n + j];
            const SplineBasis& dbas = cache.dbasis[b * n + j];
            const SplineBasis& d2bas = cache.d2basis[b * n + j];
            const SiluDerivs act = silu_derivs(cache.input(rb, cj));
            std::vector<double>& gcoef = grad.coef[j];

            double gx = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const auto ci = static_cast<Eigen::Index>(i);
                const double* w = feat.coef.data() + i * width;
                const double ws = ws_all[i * n + j];
                const double wb = wb_all[i * n + j];

                double gphi = grad_y(rb, ci);
                if (sparsity != 0.0) {
                    gphi += sparsity * sign(cache.activation[(b * m + i) * n + j]);
                }
                // gradient flowing into phi'_ij through the tangent outputs
                double h = 0.0;
                if (has_gu) {
                    for (std::size_t d = 0; d < dirs; ++d) {
                        h += grad_u[d](rb, ci) * cache.input_tangent[d](rb, cj);
                    }
                }
                if (gphi == 0.0 && h == 0.0 && !has_gu) continue;

                const double s1 = apply_basis(dbas, w);
                const double phi1 = ws * s1 + wb * act.d1;

                double* gw = gcoef.data() + i * width + bas.offset;
                for (int t = 0; t < 4; ++t) {
                    gw[t] += ws * (gphi * bas.values[t] + h * dbas.values[t]);
                }
                if (trainable_scales) {
                    const double s0 = apply_basis(bas, w);
                    grad.spline_scale[i * n + j] += gphi * s0 + h * s1;
                    grad.base_scale[i * n + j] += gphi * act.value + h * act.d1;
                }
                gx += gphi * phi1;
                if (h != 0.0) {
                    const double phi2 = ws * apply_basis(d2bas, w) + wb * act.d2;
                    gx += h * phi2;
                }
                if (has_gu) {
                    for (std::size_t d = 0; d < dirs; ++d) {
                        grad_t[d](rb, cj) += grad_u[d](rb, ci) * phi1;
                    }
                }
            }
            grad_x(rb, cj) = gx;
        }
    }
}

}  // namespace

double silu(double x) noexcept {
    return x / (1.0 + std::exp(-x));
}

std::string_view to_string(InitMode mode) noexcept {
    return mode == InitMode::kan ? "kan" : "linear";
}

InitMode parse_init_mode(std::string_view text) {
    if (text == "kan") return InitMode::kan;
    if (text == "linear") return InitMode::linear;
    throw ConfigError("unknown init mode '" + std::string(text) + "'");
}

KanLayer::KanLayer(std::size_t inputs, std::size_t outputs, const GridDomain& domain,
                   InitMode mode, double alpha)
    : outputs_(outputs), mode_(mode)
{
    if (inputs == 0 || outputs == 0) {
        throw ConfigError("layer widths must be positive");
    }
    features_.reserve(inputs);
    for (std::size_t j = 0; j < inputs; ++j) {
        features_.push_back(FeatureState{FeatureHistogram(domain, alpha),
                                         std::vector<double>(outputs * domain.num_weights(), 0.0)});
    }
    base_scale_.assign(outputs * inputs, 0.0);
    spline_scale_.assign(outputs * inputs, 1.0);
}

double KanLayer::activation(std::size_t i, std::size_t j, double z) const {
    const FeatureState& feat = features_.at(j);
    const std::size_t width = feat.domain().num_weights();
    const std::size_t n = inputs();
    const double spline = apply_basis(activation_dw(z, feat.domain()), feat.coef.data() + i * width);
    return spline_scale_[i * n + j] * spline + base_scale_[i * n + j] * silu(z);
}

Matrix KanLayer::evaluate(const Matrix& x, LayerCache* cache,
                          std::span<const Matrix> tangents,
                          std::vector<Matrix>* out_tangents) const {
    const std::size_t n = inputs();
    const std::size_t m = outputs_;
    if (static_cast<std::size_t>(x.cols()) != n) {
        throw ConfigError("layer expects " + std::to_string(n) + " inputs, got " +
                          std::to_string(x.cols()));
    }
    const auto batch = static_cast<std::size_t>(x.rows());
    const std::size_t dirs = tangents.size();
    for (const Matrix& t : tangents) {
        if (t.rows() != x.rows() || t.cols() != x.cols()) {
            throw ConfigError("tangent shape does not match the layer input");
        }
    }
    const bool need_derivs = cache != nullptr || dirs > 0;

    Matrix y = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(m));
    if (out_tangents) {
        out_tangents->assign(dirs, Matrix::Zero(x.rows(), static_cast<Eigen::Index>(m)));
    }
    if (cache) {
        cache->input = x;
        cache->input_tangent.assign(tangents.begin(), tangents.end());
        cache->basis.resize(batch * n);
        cache->dbasis.resize(batch * n);
        cache->d2basis.resize(batch * n);
        cache->activation.resize(batch * m * n);
    }

    for (std::size_t b = 0; b < batch; ++b) {
        const auto rb = static_cast<Eigen::Index>(b);
        for (std::size_t j = 0; j < n; ++j) {
            const auto cj = static_cast<Eigen::Index>(j);
            const FeatureState& feat = features_[j];
            const GridDomain& dom = feat.domain();
            const std::size_t width = dom.num_weights();
            const double z = x(rb, cj);

            const SplineBasis bas = activation_dw(z, dom);
            SplineBasis dbas;
            SiluDerivs act{0.0, 0.0, 0.0};
            if (need_derivs) {
                dbas = basis_dz(z, dom);
                act = silu_derivs(z);
            } else {
                act.value = silu(z);
            }
            if (cache) {
                cache->basis[b * n + j] = bas;
                cache->dbasis[b * n + j] = dbas;
                cache->d2basis[b * n + j] = basis_d2z(z, dom);
            }

            for (std::size_t i = 0; i < m; ++i) {
                const auto ci = static_cast<Eigen::Index>(i);
                const double* w = feat.coef.data() + i * width;
                const double ws = spline_scale_[i * n + j];
                const double wb = base_scale_[i * n + j];
                const double phi = ws * apply_basis(bas, w) + wb * act.value;
                y(rb, ci) += phi;
                if (cache) cache->activation[(b * m + i) * n + j] = phi;
                if (dirs > 0 && out_tangents) {
                    const double phi1 = ws * apply_basis(dbas, w) + wb * act.d1;
                    for (std::size_t d = 0; d < dirs; ++d) {
                        (*out_tangents)[d](rb, ci) += phi1 * tangents[d](rb, cj);
                    }
                }
            }
        }
    }
    return y;
}

AdaptKanNet::AdaptKanNet(std::vector<KanLayer> layers, AdaptConfig adapt)
    : layers_(std::move(layers)), adapt_(adapt)
{
    adapt_.validate();
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        if (layers_[l].outputs() != layers_[l + 1].inputs()) {
            throw ConfigError("layer " + std::to_string(l) + " outputs " +
                              std::to_string(layers_[l].outputs()) + " but layer " +
                              std::to_string(l + 1) + " takes " +
                              std::to_string(layers_[l + 1].inputs()));
        }
    }
}

AdaptKanNet AdaptKanNet::init(std::span<const std::size_t> widths, const InitOptions& options) {
    if (widths.size() < 2) {
        throw ConfigError("network shape needs at least an input and an output width");
    }
    if (!(options.noise >= 0.0)) {
        throw ConfigError("initialisation noise must be nonnegative");
    }
    options.adapt.validate();
    const GridDomain dom(options.domain_lo, options.domain_hi, options.omega);
    const std::vector<double> greville = greville_abscissae(dom);
    const std::size_t width = dom.num_weights();

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    std::vector<KanLayer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t n = widths[l];
        const std::size_t m = widths[l + 1];
        KanLayer layer(n, m, dom, options.mode, options.adapt.alpha);
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double>& coef = layer.feature(j).coef;
            for (std::size_t i = 0; i < m; ++i) {
                const double slope = options.mode == InitMode::linear
                                         ? options.slope.value_or(unit(rng))
                                         : 0.0;
                for (std::size_t c = 0; c < width; ++c) {
                    coef[i * width + c] = slope * greville[c] + options.noise * gauss(rng);
                }
            }
        }
        if (options.mode == InitMode::kan) {
            const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(n));
            for (double& wb : layer.base_scale()) wb = unit(rng) * inv_sqrt;
            for (double& ws : layer.spline_scale()) ws = inv_sqrt;
        }
        layers.push_back(std::move(layer));
    }
    return AdaptKanNet(std::move(layers), options.adapt);
}

std::size_t AdaptKanNet::input_width() const {
    return layers_.empty() ? 0 : layers_.front().inputs();
}

std::size_t AdaptKanNet::output_width() const {
    return layers_.empty() ? 0 : layers_.back().outputs();
}

void AdaptKanNet::set_adapt_config(const AdaptConfig& cfg) {
    cfg.validate();
    adapt_ = cfg;
    for (KanLayer& layer : layers_) {
        for (std::size_t j = 0; j < layer.inputs(); ++j) {
            layer.feature(j).histogram.set_alpha(cfg.alpha);
        }
    }
}

void AdaptKanNet::record_layer(std::size_t l, const Matrix& x, bool manual) {
    KanLayer& layer = layers_[l];
    std::vector<double> column(static_cast<std::size_t>(x.rows()));
    for (std::size_t j = 0; j < layer.inputs(); ++j) {
        for (Eigen::Index b = 0; b < x.rows(); ++b) {
            column[static_cast<std::size_t>(b)] = x(b, static_cast<Eigen::Index>(j));
        }
        FeatureState& feat = layer.feature(j);
        AdaptOutcome outcome;
        if (manual) {
            outcome = manual_adapt(feat, column, adapt_);
        } else {
            feat.histogram.update(column);
            if (mode_ == AdaptMode::automatic) {
                outcome = apply_adapt(feat, decide(feat.histogram, adapt_), adapt_);
            }
        }
        if (outcome.changed) {
            ++stats_.events;
            stats_.max_residual = std::max(stats_.max_residual, outcome.residual);
            if (outcome.rank_deficient) ++stats_.rank_deficient;
        }
    }
}

namespace {

void check_input(const Matrix& x, std::size_t width, std::size_t layer) {
    if (static_cast<std::size_t>(x.cols()) != width) {
        throw ConfigError("network input has " + std::to_string(x.cols()) +
                          " columns, expected " + std::to_string(width));
    }
    if (!x.allFinite()) {
        if (layer == 0) throw DataError("network input contains non-finite values");
        throw NumericalError("non-finite activations entering layer " + std::to_string(layer),
                             static_cast<int>(layer));
    }
}

}  // namespace

Matrix AdaptKanNet::forward(const Matrix& x, const ForwardOptions& options,
                            ForwardCache* cache, std::span<const Matrix> tangents) {
    if (!options.record && !options.manual_adapt) return predict(x, cache, tangents);
    if (layers_.empty()) throw ConfigError("network has no layers");
    check_input(x, input_width(), 0);

    if (cache) cache->layers.resize(layers_.size());
    Matrix current = x;
    std::vector<Matrix> current_t(tangents.begin(), tangents.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (l > 0) check_input(current, layers_[l].inputs(), l);
        record_layer(l, current, options.manual_adapt);
        std::vector<Matrix> next_t;
        current = layers_[l].evaluate(current, cache ? &cache->layers[l] : nullptr, current_t,
                                      current_t.empty() ? nullptr : &next_t);
        if (!current.allFinite()) {
            throw NumericalError("non-finite activations in layer " + std::to_string(l),
                                 static_cast<int>(l));
        }
        current_t = std::move(next_t);
    }
    if (cache) {
        cache->output = current;
        cache->output_tangent = current_t;
    }
    return current;
}

Matrix AdaptKanNet::predict(const Matrix& x, ForwardCache* cache,
                            std::span<const Matrix> tangents) const {
    if (layers_.empty()) throw ConfigError("network has no layers");
    check_input(x, input_width(), 0);

    if (cache) cache->layers.resize(layers_.size());
    Matrix current = x;
    std::vector<Matrix> current_t(tangents.begin(), tangents.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        std::vector<Matrix> next_t;
        current = layers_[l].evaluate(current, cache ? &cache->layers[l] : nullptr, current_t,
                                      current_t.empty() ? nullptr : &next_t);
        if (!current.allFinite()) {
            throw NumericalError("non-finite activations in layer " + std::to_string(l),
                                 static_cast<int>(l));
        }
        current_t = std::move(next_t);
    }
    if (cache) {
        cache->output = current;
        cache->output_tangent = current_t;
    }
    return current;
}

NetGrad AdaptKanNet::backward(const ForwardCache& cache, const Matrix& grad_out,
                              std::span<const Matrix> grad_out_tangent,
                              double sparsity_lambda) const {
    if (cache.layers.size() != layers_.size()) {
        throw ConfigError("backward: cache does not match the network depth");
    }
    if (grad_out.rows() != cache.output.rows() || grad_out.cols() != cache.output.cols()) {
        throw ConfigError("backward: output gradient shape does not match the forward output");
    }
    if (!grad_out_tangent.empty() && grad_out_tangent.size() != cache.output_tangent.size()) {
        throw ConfigError("backward: tangent gradient count does not match the forward pass");
    }

    double sparsity = 0.0;
    if (sparsity_lambda != 0.0 && grad_out.rows() > 0) {
        std::size_t activations = 0;
        for (const KanLayer& layer : layers_) activations += layer.inputs() * layer.outputs();
        sparsity = sparsity_lambda / (static_cast<double>(grad_out.rows()) * activations);
    }

    NetGrad out;
    out.layers.resize(layers_.size());
    Matrix grad_y = grad_out;
    std::vector<Matrix> grad_u(grad_out_tangent.begin(), grad_out_tangent.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        Matrix grad_x;
        std::vector<Matrix> grad_t;
        layer_backward(layers_[l], cache.layers[l], grad_y, grad_u, sparsity,
                       out.layers[l], grad_x, grad_t);
        grad_y = std::move(grad_x);
        if (!grad_u.empty()) grad_u = std::move(grad_t);
    }
    out.input = std::move(grad_y);
    out.input_tangent = std::move(grad_u);
    return out;
}

double AdaptKanNet::sparsity_penalty(const ForwardCache& cache, double lambda) const {
    if (lambda == 0.0 || cache.layers.empty()) return 0.0;
    double sum = 0.0;
    std::size_t activations = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        for (double phi : cache.layers[l].activation) sum += std::abs(phi);
        activations += layers_[l].inputs() * layers_[l].outputs();
    }
    const auto batch = static_cast<double>(cache.layers.front().input.rows());
    if (batch == 0.0) return 0.0;
    return lambda * sum / (batch * static_cast<double>(activations));
}

double AdaptKanNet::refine_all(int new_omega) {
    double worst = 0.0;
    for (KanLayer& layer : layers_) {
        for (std::size_t j = 0; j < layer.inputs(); ++j) {
            FeatureState& feat = layer.feature(j);
            if (new_omega == feat.domain().omega()) continue;
            RefineResult refined = refine_grid(feat.coef, feat.domain(), new_omega);
            feat.histogram = refit_histogram(feat.histogram, refined.domain, Resize::none);
            feat.coef = std::move(refined.fit.weights);
            worst = std::max(worst, refined.fit.max_residual);
        }
    }
    return worst;
}

std::size_t AdaptKanNet::adapt_all() {
    std::size_t changes = 0;
    for (KanLayer& layer : layers_) {
        for (std::size_t j = 0; j < layer.inputs(); ++j) {
            FeatureState& feat = layer.feature(j);
            const AdaptOutcome outcome = apply_adapt(feat, decide(feat.histogram, adapt_), adapt_);
            if (outcome.changed) {
                ++changes;
                ++stats_.events;
                stats_.max_residual = std::max(stats_.max_residual, outcome.residual);
            }
        }
    }
    return changes;
}

std::vector<std::span<double>> AdaptKanNet::parameter_blocks() {
    std::vector<std::span<double>> blocks;
    for (KanLayer& layer : layers_) {
        for (std::size_t j = 0; j < layer.inputs(); ++j) blocks.emplace_back(layer.feature(j).coef);
        if (layer.init_mode() == InitMode::kan) {
            blocks.emplace_back(layer.base_scale());
            blocks.emplace_back(layer.spline_scale());
        }
    }
    return blocks;
}

std::size_t AdaptKanNet::num_parameters() const {
    std::size_t count = 0;
    for (const KanLayer& layer : layers_) {
        for (std::size_t j = 0; j < layer.inputs(); ++j) count += layer.feature(j).coef.size();
        if (layer.init_mode() == InitMode::kan) count += 2 * layer.base_scale().size();
    }
    return count;
}

std::vector<std::span<const double>> gradient_blocks(const AdaptKanNet& net, const NetGrad& grad) {
    if (grad.layers.size() != net.num_layers()) {
        throw ConfigError("gradient does not match the network depth");
    }
    std::vector<std::span<const double>> blocks;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const LayerGrad& lg = grad.layers[l];
        for (const auto& c : lg.coef) blocks.emplace_back(c);
        if (net.layer(l).init_mode() == InitMode::kan) {
            blocks.emplace_back(lg.base_scale);
            blocks.emplace_back(lg.spline_scale);
        }
    }
    return blocks;
}

}  // namespace adaptkan
