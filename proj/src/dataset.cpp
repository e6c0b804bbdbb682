#include "winnow/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "winnow/model.hpp"
#include "winnow/rng.hpp"

namespace winnow {

using nlohmann::json;

namespace {

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line,
                             const std::string& message) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + message);
}

std::string pad(int value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width) {
        s.insert(s.begin(), '0');
    }
    return s;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path,
                     const std::set<std::string>& designated_ood) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open dataset file " + path.string());
    }

    Dataset dataset;
    std::set<std::string> seen_ids;
    bool saw_text = false;
    std::string line;
    std::size_t line_no = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            // parse_error for malformed text, out_of_range for number overflow
            line_error(path, line_no, std::string("invalid JSON (") + e.what() + ")");
        }
        if (!record.is_object()) {
            line_error(path, line_no, "record must be a JSON object");
        }
        for (const auto& [key, value] : record.items()) {
            if (key != "id" && key != "label" && key != "text" && key != "features") {
                line_error(path, line_no, "unknown key '" + key + "'");
            }
        }
        if (!record.contains("id") || !record["id"].is_string()) {
            line_error(path, line_no, "missing string field 'id'");
        }
        if (!record.contains("label") || !record["label"].is_string()) {
            line_error(path, line_no, "missing string field 'label'");
        }
        const bool has_text = record.contains("text");
        const bool has_feat = record.contains("features");
        if (has_text == has_feat) {
            line_error(path, line_no, "need exactly one of 'text' or 'features'");
        }

        Example ex;
        ex.id = record["id"].get<std::string>();
        ex.label = record["label"].get<std::string>();
        if (ex.id.empty()) {
            line_error(path, line_no, "empty id");
        }
        if (ex.label.empty()) {
            line_error(path, line_no, "empty label");
        }
        if (!seen_ids.insert(ex.id).second) {
            line_error(path, line_no, "duplicate id '" + ex.id + "'");
        }

        if (has_text) {
            if (!record["text"].is_string()) {
                line_error(path, line_no, "'text' must be a string");
            }
            if (dataset.has_features) {
                line_error(path, line_no, "text record in a feature-vector file");
            }
            ex.text = record["text"].get<std::string>();
            saw_text = true;
        } else {
            if (saw_text) {
                line_error(path, line_no, "feature record in a text file");
            }
            const auto& arr = record["features"];
            if (!arr.is_array() || arr.empty()) {
                line_error(path, line_no, "'features' must be a non-empty array");
            }
            ex.features.reserve(arr.size());
            for (const auto& v : arr) {
                if (!v.is_number()) {
                    line_error(path, line_no, "'features' entries must be numbers");
                }
                const double d = v.get<double>();
                if (!std::isfinite(d)) {
                    line_error(path, line_no, "'features' entries must be finite");
                }
                ex.features.push_back(d);
            }
            if (!dataset.has_features) {
                dataset.has_features = true;
                dataset.feature_dim = static_cast<int>(ex.features.size());
            } else if (static_cast<int>(ex.features.size()) != dataset.feature_dim) {
                line_error(path, line_no,
                           "expected " + std::to_string(dataset.feature_dim) + " features, got " +
                               std::to_string(ex.features.size()));
            }
        }

        dataset.labels.insert(ex.label);
        dataset.examples.push_back(std::move(ex));
    }

    for (const auto& label : designated_ood) {
        if (dataset.labels.count(label) != 0) {
            dataset.ood_labels.insert(label);
        }
    }
    return dataset;
}

void save_dataset_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write dataset file " + path.string());
    }
    for (const auto& ex : dataset.examples) {
        json record;
        record["id"] = ex.id;
        record["label"] = ex.label;
        if (dataset.has_features) {
            record["features"] = ex.features;
        } else {
            record["text"] = ex.text;
        }
        out << record.dump() << "\n";
    }
}

namespace {

Mat example_row(const Example& ex, bool has_features, int input_dim) {
    if (has_features) {
        Mat row(1, input_dim);
        for (int j = 0; j < input_dim; ++j) {
            row(0, j) = ex.features[static_cast<std::size_t>(j)];
        }
        return row;
    }
    return featurize(ex.text, input_dim);
}

}  // namespace

SplitData split_ind_ood(const Dataset& dataset, const SplitOptions& options) {
    if (!(options.ind_fraction > 0.0 && options.ind_fraction < 1.0)) {
        throw std::invalid_argument("split: ind_fraction must lie in (0, 1)");
    }
    if (!(options.train_fraction > 0.0 && options.val_fraction >= 0.0 &&
          options.train_fraction + options.val_fraction < 1.0)) {
        throw std::invalid_argument("split: need train_fraction > 0, val_fraction >= 0, sum < 1");
    }
    if (dataset.examples.empty()) {
        throw std::invalid_argument("split: empty dataset");
    }

    std::vector<std::string> candidate;
    for (const auto& label : dataset.labels) {
        if (dataset.ood_labels.count(label) == 0) {
            candidate.push_back(label);  // set iteration is sorted
        }
    }

    SplitData split;
    if (!dataset.ood_labels.empty()) {
        if (candidate.size() < 2) {
            throw std::invalid_argument("split: need at least 2 in-distribution classes");
        }
        split.ind_classes = candidate;
    } else {
        if (candidate.size() < 4) {
            throw std::invalid_argument("split: class partition needs at least 4 classes");
        }
        const auto n_ind = static_cast<std::size_t>(
            std::ceil(options.ind_fraction * static_cast<double>(candidate.size())));
        if (n_ind < 2) {
            throw std::invalid_argument("split: ind_fraction keeps fewer than 2 classes");
        }
        if (n_ind >= candidate.size()) {
            throw std::invalid_argument("split: ind_fraction leaves no held-out classes");
        }
        Rng rng(derive_seed(options.seed, "class-split"));
        const auto order = rng.permutation(candidate.size());
        for (std::size_t i = 0; i < n_ind; ++i) {
            split.ind_classes.push_back(candidate[order[i]]);
        }
        std::sort(split.ind_classes.begin(), split.ind_classes.end());
    }

    std::map<std::string, int> class_index;
    for (std::size_t i = 0; i < split.ind_classes.size(); ++i) {
        class_index[split.ind_classes[i]] = static_cast<int>(i);
    }

    split.input_dim = dataset.has_features ? dataset.feature_dim : options.text_input_dim;

    std::map<std::string, std::vector<std::size_t>> by_class;
    std::vector<std::size_t> ood_rows;
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        const auto& label = dataset.examples[i].label;
        if (class_index.count(label) != 0) {
            by_class[label].push_back(i);
        } else {
            ood_rows.push_back(i);
        }
    }

    struct Target {
        std::vector<std::size_t> rows;
        std::vector<int> labels;
        std::vector<std::string> ids;
    };
    Target train, val, test;
    Rng rng(derive_seed(options.seed, "example-split"));
    for (const auto& name : split.ind_classes) {
        auto& rows = by_class[name];
        if (rows.empty()) {
            throw std::invalid_argument("split: class '" + name + "' has no examples");
        }
        const auto order = rng.permutation(rows.size());
        const auto n = rows.size();
        const auto n_train = static_cast<std::size_t>(options.train_fraction * static_cast<double>(n));
        const auto n_val = static_cast<std::size_t>(options.val_fraction * static_cast<double>(n));
        if (n_train == 0 || n_train + n_val >= n) {
            throw std::invalid_argument("split: class '" + name + "' has too few examples");
        }
        const int y = class_index[name];
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t row = rows[order[i]];
            Target& target = i < n_train ? train : (i < n_train + n_val ? val : test);
            target.rows.push_back(row);
            target.labels.push_back(y);
            target.ids.push_back(dataset.examples[row].id);
        }
    }
    for (std::size_t row : ood_rows) {
        test.rows.push_back(row);
        test.labels.push_back(kOodClass);
        test.ids.push_back(dataset.examples[row].id);
    }

    auto materialize = [&](const Target& target, Mat& x, std::vector<int>& y) {
        x.resize(static_cast<Eigen::Index>(target.rows.size()), split.input_dim);
        for (std::size_t i = 0; i < target.rows.size(); ++i) {
            x.row(static_cast<Eigen::Index>(i)) =
                example_row(dataset.examples[target.rows[i]], dataset.has_features,
                            split.input_dim);
        }
        y = target.labels;
    };
    materialize(train, split.x_train, split.y_train);
    materialize(val, split.x_val, split.y_val);
    materialize(test, split.x_test, split.y_test);
    split.test_ids = test.ids;
    return split;
}

Dataset synth_gaussian_dataset(const SynthOptions& options) {
    if (options.ind_classes < 2) {
        throw std::invalid_argument("synth: need at least 2 in-distribution classes");
    }
    if (options.ood_classes < 0) {
        throw std::invalid_argument("synth: ood_classes must be >= 0");
    }
    if (options.dim < 2) {
        throw std::invalid_argument("synth: dim must be >= 2");
    }
    if (options.per_class < 1) {
        throw std::invalid_argument("synth: per_class must be >= 1");
    }
    if (!(options.spread > 0.0)) {
        throw std::invalid_argument("synth: spread must be > 0");
    }

    Rng rng(derive_seed(options.seed, "synth"));
    const int total = options.ind_classes + options.ood_classes;
    std::vector<Mat> means;
    means.reserve(static_cast<std::size_t>(total));
    for (int c = 0; c < total; ++c) {
        Mat mean(1, options.dim);
        double norm = 0.0;
        do {
            for (int j = 0; j < options.dim; ++j) {
                mean(0, j) = rng.normal();
            }
            norm = mean.norm();
        } while (norm < 1e-9);
        means.push_back(mean / norm);
    }

    Dataset dataset;
    dataset.has_features = true;
    dataset.feature_dim = options.dim;
    int example_no = 0;
    for (int c = 0; c < total; ++c) {
        const bool ood = c >= options.ind_classes;
        const std::string label = ood ? "ood" : "class_" + pad(c, 3);
        for (int i = 0; i < options.per_class; ++i) {
            Example ex;
            ex.id = "ex_" + pad(example_no++, 6);
            ex.label = label;
            ex.features.resize(static_cast<std::size_t>(options.dim));
            for (int j = 0; j < options.dim; ++j) {
                ex.features[static_cast<std::size_t>(j)] =
                    means[static_cast<std::size_t>(c)](0, j) + rng.normal(0.0, options.spread);
            }
            dataset.labels.insert(label);
            dataset.examples.push_back(std::move(ex));
        }
    }
    if (options.ood_classes > 0) {
        dataset.ood_labels.insert("ood");
    }
    return dataset;
}

}  // namespace winnow
