#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "winnow/gates.hpp"
#include "winnow/metrics.hpp"
#include "winnow/model.hpp"
#include "winnow/rng.hpp"
#include "winnow/serialize.hpp"
#include "winnow/types.hpp"

using nlohmann::json;
using winnow::Mat;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int n = 0;
        path = fs::temp_directory_path() /
               ("winnow-serialize-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

winnow::ModelState trained_toy_model() {
    winnow::ModelConfig config;
    config.input_dim = 3;
    config.hidden_dims = {4};
    config.num_classes = 2;
    config.seed = 5;
    winnow::ModelState model = winnow::make_model(config);
    winnow::Rng rng(2);
    Mat x(8, 3);
    std::vector<int> y;
    for (int i = 0; i < 8; ++i) {
        y.push_back(i % 2);
        for (int j = 0; j < 3; ++j) x(i, j) = rng.normal() + (i % 2 == 0 ? 1.0 : -1.0);
    }
    winnow::TrainOptions options;
    options.epochs = 3;
    options.batch_size = 4;
    winnow::train(model, x, y, options);
    return model;
}

}  // namespace

TEST_CASE("canonical dump is stable, sorted, and newline-terminated") {
    json value{{"b", 1}, {"a", 2}};
    std::string dumped = winnow::canonical_dump(value);
    CHECK(dumped == "{\n  \"a\": 2,\n  \"b\": 1\n}\n");
    CHECK(winnow::canonical_dump(value) == dumped);
}

TEST_CASE("json files round-trip byte for byte") {
    TempDir dir;
    json value{{"name", "x"}, {"vals", {1.5, -2.0, 0.125}}};
    fs::path p = dir.path / "nested" / "value.json";
    winnow::write_json_file(p, value);  // creates the parent directory
    CHECK(winnow::read_json_file(p) == value);
    std::ifstream in(p, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(bytes == winnow::canonical_dump(value));
    winnow::write_json_file(p, value);
    std::ifstream again(p, std::ios::binary);
    std::string bytes2((std::istreambuf_iterator<char>(again)),
                       std::istreambuf_iterator<char>());
    CHECK(bytes2 == bytes);
}

TEST_CASE("json hash is order-insensitive for objects and sensitive to values") {
    json a{{"x", 1}, {"y", 2}};
    json b{{"y", 2}, {"x", 1}};
    CHECK(winnow::json_hash(a) == winnow::json_hash(b));
    json c{{"x", 1}, {"y", 3}};
    CHECK(winnow::json_hash(a) != winnow::json_hash(c));
    CHECK(winnow::json_hash(a).size() == 16);
}

TEST_CASE("matrices round-trip exactly, including awkward doubles") {
    Mat m(2, 3);
    m << 0.1, -1e-300, 3.141592653589793, 1e300, -0.0, 123456789.123456789;
    Mat back = winnow::mat_from_json(winnow::mat_to_json(m), "test");
    CHECK(back == m);
    json bad = winnow::mat_to_json(m);
    bad["data"] = {1.0};
    CHECK_THROWS_WITH_AS(winnow::mat_from_json(bad, "test"),
                         doctest::Contains("size mismatch"), std::runtime_error);
}

TEST_CASE("model state round-trips bit for bit with and without a mask") {
    winnow::ModelState model = trained_toy_model();
    winnow::ModelState back = winnow::model_from_json(winnow::model_to_json(model));
    CHECK(back.config.input_dim == model.config.input_dim);
    CHECK(back.config.hidden_dims == model.config.hidden_dims);
    CHECK(back.config.num_classes == model.config.num_classes);
    CHECK(back.config.seed == model.config.seed);
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        CHECK(back.weights[l] == model.weights[l]);
        CHECK(back.biases[l] == model.biases[l]);
        CHECK(back.weights0[l] == model.weights0[l]);
        CHECK(back.biases0[l] == model.biases0[l]);
    }
    CHECK_FALSE(back.mask.has_value());

    std::vector<Mat> mask;
    for (const Mat& w : model.weights) mask.push_back(Mat::Ones(w.rows(), w.cols()));
    mask[0](0, 0) = 0.0;
    winnow::install_mask(model, mask);
    winnow::ModelState masked = winnow::model_from_json(winnow::model_to_json(model));
    REQUIRE(masked.mask.has_value());
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        CHECK((*masked.mask)[l] == (*model.mask)[l]);
        CHECK(masked.weights[l] == model.weights[l]);
    }
    CHECK(masked.weights[0](0, 0) == 0.0);
}

TEST_CASE("gate sets round-trip with their distribution parameters") {
    winnow::GateSet gates;
    gates.dist.beta = 0.5;
    gates.dist.stretch_lo = -0.2;
    gates.dist.stretch_hi = 1.3;
    winnow::Rng rng(31);
    gates.alpha["layer0"] = Mat(2, 2);
    gates.alpha["layer1"] = Mat(1, 3);
    for (auto& [name, alpha] : gates.alpha)
        for (int r = 0; r < alpha.rows(); ++r)
            for (int c = 0; c < alpha.cols(); ++c) alpha(r, c) = rng.normal();
    winnow::GateSet back = winnow::gates_from_json(winnow::gates_to_json(gates));
    CHECK(back.dist.beta == gates.dist.beta);
    CHECK(back.dist.stretch_lo == gates.dist.stretch_lo);
    CHECK(back.dist.stretch_hi == gates.dist.stretch_hi);
    REQUIRE(back.alpha.size() == 2);
    CHECK(back.alpha.at("layer0") == gates.alpha.at("layer0"));
    CHECK(back.alpha.at("layer1") == gates.alpha.at("layer1"));
}

TEST_CASE("loaders reject wrong kinds and future format versions") {
    winnow::ModelState model = trained_toy_model();
    json good = winnow::model_to_json(model);
    json wrong_kind = good;
    wrong_kind["kind"] = "gates";
    CHECK_THROWS_WITH_AS(winnow::model_from_json(wrong_kind),
                         doctest::Contains("wrong kind"), std::runtime_error);
    json wrong_version = good;
    wrong_version["format_version"] = 999;
    CHECK_THROWS_WITH_AS(winnow::model_from_json(wrong_version),
                         doctest::Contains("format version"), std::runtime_error);

    winnow::GateSet gates;
    gates.alpha["layer0"] = Mat::Zero(1, 1);
    json ggood = winnow::gates_to_json(gates);
    json gbad = ggood;
    gbad["kind"] = "model";
    CHECK_THROWS_WITH_AS(winnow::gates_from_json(gbad), doctest::Contains("wrong kind"),
                         std::runtime_error);
}

TEST_CASE("report serialization carries every headline number") {
    winnow::EvalReport report;
    report.n_ind = 10;
    report.n_ood = 4;
    report.auroc = 0.875;
    report.tnr_at_95_tpr = 0.5;
    report.fnr_at_95_tpr = 0.5;
    report.threshold_95 = -1.25;
    report.accuracy_with_rejection = 0.75;
    report.ind_accuracy = 0.9;
    report.ece = 0.0625;
    report.mce = 0.125;
    winnow::ReliabilityBin bin;
    bin.low = 0.0;
    bin.high = 0.5;
    bin.count = 3;
    bin.mean_confidence = 0.25;
    bin.mean_accuracy = 0.25;
    report.bins.push_back(bin);
    json j = winnow::report_to_json(report);
    CHECK(j.at("kind") == "eval_report");
    CHECK(j.at("auroc") == 0.875);
    CHECK(j.at("n_ind") == 10);
    CHECK(j.at("tnr_at_95_tpr") == 0.5);
    CHECK(j.at("bins").size() == 1);
    CHECK(j.at("bins")[0].at("count") == 3);
    CHECK(j.at("bins")[0].at("mean_confidence") == 0.25);
}

TEST_CASE("reading a missing or malformed file names the path") {
    TempDir dir;
    fs::path missing = dir.path / "nope.json";
    try {
        winnow::read_json_file(missing);
        FAIL("expected an exception");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("nope.json") != std::string::npos);
    }
    fs::path broken = dir.path / "broken.json";
    std::ofstream(broken) << "{not json";
    CHECK_THROWS(winnow::read_json_file(broken));
}
