#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "winnow/types.hpp"

namespace winnow {

// One record of a JSON-lines corpus. Exactly one of text / features is
// populated, uniformly across a file.
struct Example {
    std::string id;
    std::string label;
    std::string text;
    std::vector<double> features;

    friend bool operator==(const Example&, const Example&) = default;
};

struct Dataset {
    std::vector<Example> examples;
    std::set<std::string> labels;      // every label occurring in the file
    std::set<std::string> ood_labels;  // designated held-out labels present in the file
    bool has_features = false;
    int feature_dim = 0;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Parses a JSON-lines file. Every line must be an object with string "id",
// string "label", and exactly one of string "text" or numeric-array
// "features"; any violation (including duplicate ids, unknown keys, mixed
// text/feature records, or ragged feature lengths) raises an error naming
// the line. `designated_ood` labels, when present in the file, are kept
// aside as the out-of-distribution portion instead of entering the class
// split.
Dataset load_dataset(const std::filesystem::path& path,
                     const std::set<std::string>& designated_ood = {});

void save_dataset_jsonl(const Dataset& dataset, const std::filesystem::path& path);

// Materialized split. Train/val hold in-distribution examples only; test
// holds the in-distribution test portion followed by every
// out-of-distribution example, whose label entry is kOodClass.
struct SplitData {
    std::vector<std::string> ind_classes;  // sorted; positional class index
    int input_dim = 0;
    Mat x_train, x_val, x_test;
    std::vector<int> y_train, y_val, y_test;
    std::vector<std::string> test_ids;
};

struct SplitOptions {
    double ind_fraction = 0.75;  // used only when no designated labels exist
    double train_fraction = 0.7;
    double val_fraction = 0.1;
    int text_input_dim = 256;  // hashed feature width for text corpora
    std::uint64_t seed = 0;
};

// Partitions classes into in-distribution and out-of-distribution, then
// splits each in-distribution class train/val/test. When the dataset has
// designated held-out labels those form the OOD side; otherwise a seeded
// shuffle keeps ceil(ind_fraction * C) classes in-distribution.
SplitData split_ind_ood(const Dataset& dataset, const SplitOptions& options);

struct SynthOptions {
    int ind_classes = 15;
    int ood_classes = 5;
    int dim = 20;
    int per_class = 200;
    double spread = 0.35;  // within-class standard deviation
    std::uint64_t seed = 0;
};

// Gaussian class clusters with unit-norm means; held-out clusters all carry
// the single label "ood".
Dataset synth_gaussian_dataset(const SynthOptions& options);

}  // namespace winnow
