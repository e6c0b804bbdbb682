#pragma once

#include <string>
#include <vector>

namespace winnow {

// Per-example detector output. Higher score means more in-distribution.
// predicted/correct describe the classifier on top of the detector;
// correct is meaningless (and ignored) for OOD examples.
struct ScoreRecord {
    std::string id;
    double score = 0.0;
    double confidence = 0.0;  // calibrated top-class probability in [0, 1]
    bool is_ood = false;
    bool correct = false;
};

// Area under the ROC curve of score as an in-distribution detector, with
// ties counted half. Requires at least one example of each domain.
double auroc(const std::vector<ScoreRecord>& records);

struct TnrResult {
    double threshold = 0.0;  // smallest score still accepted as IND
    double tnr = 0.0;        // fraction of OOD rejected at that threshold
};

// Picks the largest threshold that keeps at least `tpr_level` of the IND
// examples at or above it, then reports the OOD rejection rate there.
TnrResult tnr_at_tpr(const std::vector<ScoreRecord>& records, double tpr_level);

// Classification accuracy where every rejected example counts as correct
// iff it is OOD, and every accepted example counts as correct iff it is IND
// and the classifier got it right.
double accuracy_with_rejection(const std::vector<ScoreRecord>& records, double threshold);

// Classifier accuracy over the IND examples, ignoring scores.
double ind_accuracy(const std::vector<ScoreRecord>& records);

struct ReliabilityBin {
    double low = 0.0;
    double high = 0.0;
    long count = 0;
    double mean_confidence = 0.0;
    double mean_accuracy = 0.0;
};

// Equal-width confidence bins over the IND examples; confidence 1.0 falls
// in the last bin.
std::vector<ReliabilityBin> reliability_bins(const std::vector<ScoreRecord>& records, int bins);

double expected_calibration_error(const std::vector<ReliabilityBin>& bins);
double max_calibration_error(const std::vector<ReliabilityBin>& bins);

struct EvalReport {
    long n_ind = 0;
    long n_ood = 0;
    double auroc = 0.0;
    double tnr_at_95_tpr = 0.0;
    double fnr_at_95_tpr = 0.0;  // 1 - tnr_at_95_tpr
    double threshold_95 = 0.0;
    double accuracy_with_rejection = 0.0;
    double ind_accuracy = 0.0;
    double ece = 0.0;
    double mce = 0.0;
    std::vector<ReliabilityBin> bins;
};

EvalReport evaluate(const std::vector<ScoreRecord>& records, double tpr_level = 0.95,
                    int bins = 10);

}  // namespace winnow
