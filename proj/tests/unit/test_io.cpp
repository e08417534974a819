#include "adaptkan/csv.hpp"
#include "adaptkan/errors.hpp"
#include "adaptkan/model_io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace adaptkan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "adaptkan_test_io";
    fs::create_directories(dir);
    return dir / name;
}

Matrix uniform(std::size_t rows, std::size_t cols, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = u(rng);
    return m;
}

}  // namespace

TEST_CASE("format_real round trips") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(u(rng) * 300));
        CHECK(std::stod(format_real(v)) == v);
    }
    CHECK(format_real(INFINITY) == "inf");
    CHECK(format_real(-INFINITY) == "-inf");
    CHECK(format_real(NAN) == "nan");
    CHECK(format_real(0.1) == "0.1");
}

TEST_CASE("csv round trip") {
    const Matrix m = uniform(20, 3, -5.0, 5.0, 2);
    const std::string path = scratch("m.csv").string();
    write_csv(path, {"a", "b", "c"}, m);
    const CsvTable t = read_csv(path);
    CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
    CHECK(t.values == m);
    CHECK(t.column("b") == 1);
    CHECK_THROWS_AS(t.column("z"), ConfigError);

    write_csv_rows(path, {"x", "y"}, {{"1", "inf"}, {"-2.5", "nan"}});
    const CsvTable s = read_csv(path);
    CHECK(std::isinf(s.values(0, 1)));
    CHECK(std::isnan(s.values(1, 1)));
}

TEST_CASE("csv errors") {
    CHECK_THROWS_AS(read_csv(scratch("does_not_exist.csv").string()), IoError);
    const fs::path bad = scratch("bad.csv");
    {
        std::ofstream f(bad);
        f << "a,b\n1,2\n3,hello\n";
    }
    CHECK_THROWS_AS(read_csv(bad.string()), IoError);
    {
        std::ofstream f(bad);
        f << "a,b\n1,2\n3\n";
    }
    CHECK_THROWS_AS(read_csv(bad.string()), IoError);
}

TEST_CASE("model round trip is bitwise") {
    for (InitMode mode : {InitMode::kan, InitMode::linear}) {
        InitOptions opt;
        opt.mode = mode;
        opt.seed = 12;
        opt.omega = 6;
        opt.adapt.alpha = 0.05;
        opt.adapt.stretch_mode = StretchMode::edge;
        opt.adapt.refit_mode = RefitMode::greville;
        AdaptKanNet net = AdaptKanNet::init(std::vector<std::size_t>{3, 4, 2}, opt);
        net.set_adapt_mode(AdaptMode::manual);
        // move some state away from the defaults
        net.forward(uniform(64, 3, -2.0, 1.5, 3), ForwardOptions{true, true});
        net.forward(uniform(64, 3, -3.0, 3.0, 4), ForwardOptions{true, false});

        const std::string path = scratch("model.json").string();
        save_model(path, net, {{"seed", 12}});
        const ModelFile back = load_model(path);
        CHECK(back.metadata.at("seed") == 12);
        CHECK(back.net.adapt_mode() == AdaptMode::manual);
        CHECK(back.net.adapt_config().stretch_mode == StretchMode::edge);
        CHECK(back.net.adapt_config().refit_mode == RefitMode::greville);
        CHECK(back.net.adapt_config().alpha == 0.05);

        const Matrix x = uniform(200, 3, -4.0, 4.0, 5);
        CHECK(back.net.predict(x) == net.predict(x));
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            for (std::size_t j = 0; j < net.layer(l).inputs(); ++j) {
                const auto& h0 = net.layer(l).feature(j).histogram;
                const auto& h1 = back.net.layer(l).feature(j).histogram;
                CHECK(h0.domain() == h1.domain());
                CHECK(std::vector<double>(h0.counts().begin(), h0.counts().end()) ==
                      std::vector<double>(h1.counts().begin(), h1.counts().end()));
                CHECK(h0.ood_counts() == h1.ood_counts());
                CHECK(h0.ood_a() == h1.ood_a());
                CHECK(h0.ood_b() == h1.ood_b());
            }
        }
    }
}

TEST_CASE("model loading errors") {
    InitOptions opt;
    AdaptKanNet net = AdaptKanNet::init(std::vector<std::size_t>{2, 1}, opt);
    nlohmann::json doc = model_to_json(net);
    nlohmann::json missing = doc;
    missing.erase("layers");
    try {
        model_from_json(missing);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("layers") != std::string::npos);
    }
    nlohmann::json future = doc;
    future["format_version"] = kModelFormatVersion + 1;
    CHECK_THROWS_AS(model_from_json(future), ConfigError);
    CHECK_THROWS_AS(load_model(scratch("nope.json").string()), IoError);

    const AdaptConfig cfg = adapt_config_from_json(nlohmann::json::object());
    CHECK(cfg.alpha == AdaptConfig{}.alpha);
    CHECK(adapt_config_from_json(adapt_config_to_json(AdaptConfig{})).prune_patience == 1);
}
