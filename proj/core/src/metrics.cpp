#include "wsp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "wsp/error.hpp"
#include "wsp/rng.hpp"

namespace wsp {

namespace {

void check_binary(std::span<const int> labels, const char* what) {
  bool pos = false;
  bool neg = false;
  for (int y : labels) {
    if (y == 1) pos = true;
    else if (y == 0) neg = true;
    else throw DomainError(std::string(what) + ": labels must be 0 or 1");
  }
  if (!pos || !neg) throw ContractError(std::string(what) + ": both classes must be present");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  check_binary(labels, "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average rank within each tie group, 1-based.
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double avg_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    start = end;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n - n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("balanced_accuracy: length mismatch");
  check_binary(labels, "balanced_accuracy");
  std::size_t tp = 0, pos = 0, tn = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      ++pos;
      tp += predictions[i] == 1;
    } else {
      ++neg;
      tn += predictions[i] == 0;
    }
  }
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

std::map<std::int64_t, double> aggregate_patient(std::span<const double> probabilities,
                                                 std::span<const std::int64_t> patient_ids) {
  if (probabilities.size() != patient_ids.size()) throw DimensionError("aggregate_patient: length mismatch");
  std::map<std::int64_t, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (!(probabilities[i] >= 0.0 && probabilities[i] <= 1.0)) {
      throw DomainError("aggregate_patient: probability outside [0, 1]");
    }
    auto& [sum, count] = acc[patient_ids[i]];
    sum += probabilities[i];
    ++count;
  }
  std::map<std::int64_t, double> out;
  for (const auto& [pid, sc] : acc) out[pid] = sc.first / static_cast<double>(sc.second);
  return out;
}

std::vector<std::size_t> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified_kfold: need at least 2 folds");
  const std::set<int> classes(labels.begin(), labels.end());
  std::vector<std::size_t> fold(labels.size(), 0);
  Rng rng = make_rng(seed, {0x666f6cULL});
  std::size_t next = 0;
  for (int c : classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    if (members.size() < k) {
      throw ContractError("stratified_kfold: class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                          " members, fewer than " + std::to_string(k) + " folds");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) {
      fold[i] = next;
      next = (next + 1) % k;
    }
  }
  return fold;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw ContractError("mean of an empty sequence");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double stddev(std::span<const double> values) {
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("pearson: need two equal-length sequences");
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw DegenerateInputError("pearson: constant sequence");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace wsp
