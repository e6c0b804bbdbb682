#include "winnow/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "winnow/rng.hpp"

namespace winnow {

using nlohmann::json;

std::string canonical_dump(const json& value) { return value.dump(2) + "\n"; }

void write_json_file(const std::filesystem::path& path, const json& value) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << canonical_dump(value);
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": invalid JSON (" + e.what() + ")");
    }
}

std::string json_hash(const json& value) {
    const std::uint64_t h = fnv1a(value.dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

json mat_to_json(const Mat& m) {
    json out;
    out["rows"] = m.rows();
    out["cols"] = m.cols();
    json data = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            data.push_back(m(r, c));
        }
    }
    out["data"] = std::move(data);
    return out;
}

Mat mat_from_json(const json& value, const std::string& where) {
    if (!value.is_object() || !value.contains("rows") || !value.contains("cols") ||
        !value.contains("data") || !value["data"].is_array()) {
        throw std::runtime_error(where + ": malformed matrix record");
    }
    const auto rows = value["rows"].get<Eigen::Index>();
    const auto cols = value["cols"].get<Eigen::Index>();
    const auto& data = value["data"];
    if (rows < 0 || cols < 0 ||
        data.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
        throw std::runtime_error(where + ": matrix size mismatch");
    }
    Mat m(rows, cols);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = data[i++].get<double>();
        }
    }
    return m;
}

json model_to_json(const ModelState& model) {
    json out;
    out["format_version"] = kFormatVersion;
    out["kind"] = "model";
    out["config"] = {{"input_dim", model.config.input_dim},
                     {"hidden_dims", model.config.hidden_dims},
                     {"num_classes", model.config.num_classes},
                     {"seed", model.config.seed}};
    auto mats = [](const std::vector<Mat>& ms) {
        json arr = json::array();
        for (const auto& m : ms) {
            arr.push_back(mat_to_json(m));
        }
        return arr;
    };
    out["weights"] = mats(model.weights);
    out["biases"] = mats(model.biases);
    out["weights0"] = mats(model.weights0);
    out["biases0"] = mats(model.biases0);
    out["mask"] = model.mask ? mats(*model.mask) : json(nullptr);
    return out;
}

ModelState model_from_json(const json& value) {
    if (!value.is_object() || value.value("kind", "") != "model") {
        throw std::runtime_error("model record: wrong kind");
    }
    if (value.value("format_version", -1) != kFormatVersion) {
        throw std::runtime_error("model record: unsupported format version");
    }
    ModelState model;
    const auto& cfg = value.at("config");
    model.config.input_dim = cfg.at("input_dim").get<int>();
    model.config.hidden_dims = cfg.at("hidden_dims").get<std::vector<int>>();
    model.config.num_classes = cfg.at("num_classes").get<int>();
    model.config.seed = cfg.at("seed").get<std::uint64_t>();
    validate(model.config);

    auto mats = [](const json& arr, const char* where) {
        std::vector<Mat> ms;
        for (const auto& item : arr) {
            ms.push_back(mat_from_json(item, where));
        }
        return ms;
    };
    model.weights = mats(value.at("weights"), "model weights");
    model.biases = mats(value.at("biases"), "model biases");
    model.weights0 = mats(value.at("weights0"), "model weights0");
    model.biases0 = mats(value.at("biases0"), "model biases0");
    if (!value.at("mask").is_null()) {
        model.mask = mats(value.at("mask"), "model mask");
    }
    const std::size_t layers = model.config.hidden_dims.size() + 1;
    if (model.weights.size() != layers || model.biases.size() != layers ||
        model.weights0.size() != layers || model.biases0.size() != layers ||
        (model.mask && model.mask->size() != layers)) {
        throw std::runtime_error("model record: layer count mismatch");
    }
    return model;
}

json gates_to_json(const GateSet& gates) {
    json out;
    out["format_version"] = kFormatVersion;
    out["kind"] = "gates";
    out["beta"] = gates.dist.beta;
    out["stretch_lo"] = gates.dist.stretch_lo;
    out["stretch_hi"] = gates.dist.stretch_hi;
    json alpha = json::object();
    for (const auto& [name, mat] : gates.alpha) {
        alpha[name] = mat_to_json(mat);
    }
    out["alpha"] = std::move(alpha);
    return out;
}

GateSet gates_from_json(const json& value) {
    if (!value.is_object() || value.value("kind", "") != "gates") {
        throw std::runtime_error("gates record: wrong kind");
    }
    if (value.value("format_version", -1) != kFormatVersion) {
        throw std::runtime_error("gates record: unsupported format version");
    }
    GateSet gates;
    gates.dist.beta = value.at("beta").get<double>();
    gates.dist.stretch_lo = value.at("stretch_lo").get<double>();
    gates.dist.stretch_hi = value.at("stretch_hi").get<double>();
    validate(gates.dist);
    for (const auto& [name, mat] : value.at("alpha").items()) {
        gates.alpha.emplace(name, mat_from_json(mat, "gates alpha"));
    }
    return gates;
}

json report_to_json(const EvalReport& report) {
    json out;
    out["format_version"] = kFormatVersion;
    out["kind"] = "eval_report";
    out["n_ind"] = report.n_ind;
    out["n_ood"] = report.n_ood;
    out["auroc"] = report.auroc;
    out["tnr_at_95_tpr"] = report.tnr_at_95_tpr;
    out["fnr_at_95_tpr"] = report.fnr_at_95_tpr;
    out["threshold_95"] = report.threshold_95;
    out["accuracy_with_rejection"] = report.accuracy_with_rejection;
    out["ind_accuracy"] = report.ind_accuracy;
    out["ece"] = report.ece;
    out["mce"] = report.mce;
    out["bins"] = json::array();
    for (const auto& bin : report.bins) {
        out["bins"].push_back({{"low", bin.low},
                               {"high", bin.high},
                               {"count", bin.count},
                               {"mean_confidence", bin.mean_confidence},
                               {"mean_accuracy", bin.mean_accuracy}});
    }
    return out;
}

}  // namespace winnow
