#include "winnow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace winnow {

namespace {

void require_both_domains(const std::vector<ScoreRecord>& records, const char* where) {
    bool has_ind = false;
    bool has_ood = false;
    for (const auto& r : records) {
        (r.is_ood ? has_ood : has_ind) = true;
        if (!std::isfinite(r.score)) {
            throw std::invalid_argument(std::string(where) + ": non-finite score");
        }
    }
    if (!has_ind || !has_ood) {
        throw std::invalid_argument(std::string(where) +
                                    ": need at least one example of each domain");
    }
}

std::vector<double> ind_scores_desc(const std::vector<ScoreRecord>& records) {
    std::vector<double> scores;
    for (const auto& r : records) {
        if (!r.is_ood) {
            scores.push_back(r.score);
        }
    }
    std::sort(scores.begin(), scores.end(), std::greater<double>());
    return scores;
}

}  // namespace

double auroc(const std::vector<ScoreRecord>& records) {
    require_both_domains(records, "auroc");
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return records[a].score < records[b].score;
    });

    // midranks: tied scores share the average of their 1-based positions
    double ind_rank_sum = 0.0;
    double n_ind = 0.0;
    double n_ood = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && records[order[j]].score == records[order[i]].score) {
            ++j;
        }
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (records[order[k]].is_ood) {
                n_ood += 1.0;
            } else {
                n_ind += 1.0;
                ind_rank_sum += midrank;
            }
        }
        i = j;
    }
    return (ind_rank_sum - n_ind * (n_ind + 1.0) / 2.0) / (n_ind * n_ood);
}

TnrResult tnr_at_tpr(const std::vector<ScoreRecord>& records, double tpr_level) {
    if (!(tpr_level > 0.0 && tpr_level <= 1.0)) {
        throw std::invalid_argument("tnr_at_tpr: level must lie in (0, 1]");
    }
    require_both_domains(records, "tnr_at_tpr");
    const std::vector<double> ind = ind_scores_desc(records);
    const auto n = static_cast<double>(ind.size());
    auto needed = static_cast<std::size_t>(std::ceil(tpr_level * n - 1e-9));
    needed = std::max<std::size_t>(needed, 1);

    TnrResult result;
    result.threshold = ind[needed - 1];
    long rejected = 0;
    long total = 0;
    for (const auto& r : records) {
        if (r.is_ood) {
            ++total;
            if (r.score < result.threshold) {
                ++rejected;
            }
        }
    }
    result.tnr = static_cast<double>(rejected) / static_cast<double>(total);
    return result;
}

double accuracy_with_rejection(const std::vector<ScoreRecord>& records, double threshold) {
    if (records.empty()) {
        throw std::invalid_argument("accuracy_with_rejection: empty record set");
    }
    long correct = 0;
    for (const auto& r : records) {
        const bool accepted = r.score >= threshold;
        if (accepted ? (!r.is_ood && r.correct) : r.is_ood) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

double ind_accuracy(const std::vector<ScoreRecord>& records) {
    long n = 0;
    long correct = 0;
    for (const auto& r : records) {
        if (!r.is_ood) {
            ++n;
            correct += r.correct ? 1 : 0;
        }
    }
    if (n == 0) {
        throw std::invalid_argument("ind_accuracy: no in-distribution records");
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<ReliabilityBin> reliability_bins(const std::vector<ScoreRecord>& records, int bins) {
    if (bins < 1) {
        throw std::invalid_argument("reliability_bins: need at least 1 bin");
    }
    std::vector<ReliabilityBin> out(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
        out[static_cast<std::size_t>(b)].low = static_cast<double>(b) / bins;
        out[static_cast<std::size_t>(b)].high = static_cast<double>(b + 1) / bins;
    }
    std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> acc_sum(static_cast<std::size_t>(bins), 0.0);
    for (const auto& r : records) {
        if (r.is_ood) {
            continue;
        }
        if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
            throw std::invalid_argument("reliability_bins: confidence outside [0, 1]");
        }
        auto b = static_cast<std::size_t>(r.confidence * bins);
        b = std::min(b, static_cast<std::size_t>(bins - 1));
        out[b].count += 1;
        conf_sum[b] += r.confidence;
        acc_sum[b] += r.correct ? 1.0 : 0.0;
    }
    for (std::size_t b = 0; b < out.size(); ++b) {
        if (out[b].count > 0) {
            out[b].mean_confidence = conf_sum[b] / static_cast<double>(out[b].count);
            out[b].mean_accuracy = acc_sum[b] / static_cast<double>(out[b].count);
        }
    }
    return out;
}

double expected_calibration_error(const std::vector<ReliabilityBin>& bins) {
    long total = 0;
    for (const auto& bin : bins) {
        total += bin.count;
    }
    if (total == 0) {
        throw std::invalid_argument("expected_calibration_error: empty bins");
    }
    double ece = 0.0;
    for (const auto& bin : bins) {
        if (bin.count > 0) {
            ece += (static_cast<double>(bin.count) / static_cast<double>(total)) *
                   std::abs(bin.mean_accuracy - bin.mean_confidence);
        }
    }
    return ece;
}

double max_calibration_error(const std::vector<ReliabilityBin>& bins) {
    double mce = 0.0;
    bool any = false;
    for (const auto& bin : bins) {
        if (bin.count > 0) {
            any = true;
            mce = std::max(mce, std::abs(bin.mean_accuracy - bin.mean_confidence));
        }
    }
    if (!any) {
        throw std::invalid_argument("max_calibration_error: empty bins");
    }
    return mce;
}

EvalReport evaluate(const std::vector<ScoreRecord>& records, double tpr_level, int bins) {
    EvalReport report;
    for (const auto& r : records) {
        (r.is_ood ? report.n_ood : report.n_ind) += 1;
    }
    report.auroc = auroc(records);
    const TnrResult tnr = tnr_at_tpr(records, tpr_level);
    report.threshold_95 = tnr.threshold;
    report.tnr_at_95_tpr = tnr.tnr;
    report.fnr_at_95_tpr = 1.0 - tnr.tnr;
    report.accuracy_with_rejection = accuracy_with_rejection(records, tnr.threshold);
    report.ind_accuracy = ind_accuracy(records);
    report.bins = reliability_bins(records, bins);
    report.ece = expected_calibration_error(report.bins);
    report.mce = max_calibration_error(report.bins);
    return report;
}

}  // namespace winnow
