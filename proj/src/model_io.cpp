#include "adaptkan/model_io.hpp"

#include "adaptkan/errors.hpp"

#include <fstream>
#include <string_view>

namespace adaptkan {

using nlohmann::json;

namespace {

AdaptMode parse_adapt_mode(std::string_view text) {
    if (text == "automatic") return AdaptMode::automatic;
    if (text == "manual") return AdaptMode::manual;
    if (text == "off") return AdaptMode::off;
    throw ConfigError("unknown adapt mode '" + std::string(text) + "'");
}

std::string_view adapt_mode_name(AdaptMode mode) {
    switch (mode) {
    case AdaptMode::automatic: return "automatic";
    case AdaptMode::manual: return "manual";
    case AdaptMode::off: return "off";
    }
    return "?";
}

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw ConfigError(std::string("model file is missing key '") + key + "'");
    }
    return j.at(key);
}

template <class T>
T get(const json& j, const char* key) {
    try {
        return field(j, key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model file key '") + key + "': " + e.what());
    }
}

}  // namespace

json adapt_config_to_json(const AdaptConfig& cfg) {
    return {{"alpha", cfg.alpha},
            {"prune_patience", cfg.prune_patience},
            {"stretch_mode", to_string(cfg.stretch_mode)},
            {"shrink_rule", to_string(cfg.shrink_rule)},
            {"refit_mode", to_string(cfg.refit_mode)},
            {"outlier_count", cfg.outlier_count}};
}

AdaptConfig adapt_config_from_json(const json& j) {
    AdaptConfig cfg;
    if (!j.is_object()) throw ConfigError("adapt settings must be an object");
    try {
        if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
        if (j.contains("prune_patience")) cfg.prune_patience = j.at("prune_patience").get<int>();
        if (j.contains("stretch_mode")) cfg.stretch_mode = parse_stretch_mode(j.at("stretch_mode").get<std::string>());
        if (j.contains("shrink_rule")) cfg.shrink_rule = parse_shrink_rule(j.at("shrink_rule").get<std::string>());
        if (j.contains("refit_mode")) cfg.refit_mode = parse_refit_mode(j.at("refit_mode").get<std::string>());
        if (j.contains("outlier_count")) cfg.outlier_count = j.at("outlier_count").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("adapt settings: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

json model_to_json(const AdaptKanNet& net, const json& metadata) {
    json layers = json::array();
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const KanLayer& layer = net.layer(l);
        json features = json::array();
        for (std::size_t j = 0; j < layer.inputs(); ++j) {
            const FeatureState& f = layer.feature(j);
            const GridDomain& d = f.domain();
            const FeatureHistogram& h = f.histogram;
            const std::span<const double> counts = h.counts();
            features.push_back({{"a", d.a()},
                                {"b", d.b()},
                                {"omega", d.omega()},
                                {"degree", d.degree()},
                                {"coef", f.coef},
                                {"hist", std::vector<double>(counts.begin(), counts.end())},
                                {"ood_hist", {h.ood_counts()[0], h.ood_counts()[1]}},
                                {"ood_a", h.ood_a()},
                                {"ood_b", h.ood_b()},
                                {"alpha", h.alpha()}});
        }
        layers.push_back({{"inputs", layer.inputs()},
                          {"outputs", layer.outputs()},
                          {"init_mode", to_string(layer.init_mode())},
                          {"base_scale", layer.base_scale()},
                          {"spline_scale", layer.spline_scale()},
                          {"features", std::move(features)}});
    }
    return {{"format_version", kModelFormatVersion},
            {"adapt", adapt_config_to_json(net.adapt_config())},
            {"adapt_mode", adapt_mode_name(net.adapt_mode())},
            {"layers", std::move(layers)},
            {"metadata", metadata}};
}

ModelFile model_from_json(const json& doc) {
    const int version = get<int>(doc, "format_version");
    if (version != kModelFormatVersion) {
        throw ConfigError("unsupported model format_version " + std::to_string(version));
    }
    const AdaptConfig adapt = adapt_config_from_json(field(doc, "adapt"));

    std::vector<KanLayer> layers;
    for (const json& jl : field(doc, "layers")) {
        const auto inputs = get<std::size_t>(jl, "inputs");
        const auto outputs = get<std::size_t>(jl, "outputs");
        const InitMode mode = parse_init_mode(get<std::string>(jl, "init_mode"));
        const json& jf = field(jl, "features");
        if (!jf.is_array() || jf.empty() || jf.size() != inputs) {
            throw ConfigError("model layer lists " + std::to_string(jf.size()) +
                              " features for " + std::to_string(inputs) + " inputs");
        }
        const GridDomain first(get<double>(jf[0], "a"), get<double>(jf[0], "b"),
                               get<int>(jf[0], "omega"), get<int>(jf[0], "degree"));
        KanLayer layer(inputs, outputs, first, mode, get<double>(jf[0], "alpha"));
        for (std::size_t j = 0; j < inputs; ++j) {
            const json& f = jf[j];
            const GridDomain dom(get<double>(f, "a"), get<double>(f, "b"),
                                 get<int>(f, "omega"), get<int>(f, "degree"));
            const auto ood = get<std::vector<double>>(f, "ood_hist");
            if (ood.size() != 2) throw ConfigError("model ood_hist must have 2 entries");
            FeatureHistogram hist = FeatureHistogram::from_state(
                dom, get<double>(f, "alpha"), get<std::vector<double>>(f, "hist"),
                {ood[0], ood[1]}, get<double>(f, "ood_a"), get<double>(f, "ood_b"));
            auto coef = get<std::vector<double>>(f, "coef");
            if (coef.size() != outputs * dom.num_weights()) {
                throw ConfigError("model feature " + std::to_string(j) + " has " +
                                  std::to_string(coef.size()) + " coefficients, expected " +
                                  std::to_string(outputs * dom.num_weights()));
            }
            layer.feature(j) = FeatureState{std::move(hist), std::move(coef)};
        }
        const auto base = get<std::vector<double>>(jl, "base_scale");
        const auto spline = get<std::vector<double>>(jl, "spline_scale");
        if (base.size() != inputs * outputs || spline.size() != inputs * outputs) {
            throw ConfigError("model scale arrays must have inputs*outputs entries");
        }
        layer.base_scale() = base;
        layer.spline_scale() = spline;
        layers.push_back(std::move(layer));
    }
    ModelFile out{AdaptKanNet(std::move(layers), adapt), json::object()};
    if (doc.contains("adapt_mode")) out.net.set_adapt_mode(parse_adapt_mode(get<std::string>(doc, "adapt_mode")));
    if (doc.contains("metadata")) out.metadata = doc.at("metadata");
    return out;
}

void save_model(const std::string& path, const AdaptKanNet& net, const json& metadata) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << model_to_json(net, metadata).dump(1) << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

ModelFile load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError("model '" + path + "' is not valid JSON: " + e.what());
    }
    return model_from_json(doc);
}

}  // namespace adaptkan
