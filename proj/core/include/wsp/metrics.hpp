#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace wsp {

/// Area under the ROC curve as the Mann-Whitney statistic,
/// P(score+ > score-) + P(score+ == score-) / 2, from average ranks.
double auc(std::span<const double> scores, std::span<const int> labels);

/// (sensitivity + specificity) / 2 for 0/1 predictions.
double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Arithmetic mean of the slice probabilities of each patient.
std::map<std::int64_t, double> aggregate_patient(std::span<const double> probabilities,
                                                 std::span<const std::int64_t> patient_ids);

/// Fold index per item. Items of each class are shuffled and dealt round
/// robin; the deal continues where the previous class stopped so fold sizes
/// stay within one. Throws ContractError naming a class with fewer than k items.
std::vector<std::size_t> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

double mean(std::span<const double> values);
/// Population standard deviation.
double stddev(std::span<const double> values);
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace wsp
