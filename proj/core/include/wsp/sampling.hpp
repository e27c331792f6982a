#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsp/dataset.hpp"
#include "wsp/error.hpp"

namespace wsp {

enum class SamplingMode { one_slice_per_patient, fallback_balanced };
/// Which label the class balance is computed over.
enum class BalanceLabel { weak, strong };

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& name);

struct BatchSpec {
  std::size_t batch_size = 32;
  SamplingMode mode = SamplingMode::one_slice_per_patient;
  BalanceLabel balance = BalanceLabel::weak;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  /// Batches per epoch in fallback mode; 0 means ceil(#patients / N).
  std::size_t fallback_steps = 0;

  void validate() const;
};

/// Strict sampling needs at least N patients; callers switch to fallback.
class FallbackRequired : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Every batch is a list of indices into PreparedDataset::slices.
using Batch = std::vector<std::size_t>;

/// ceil(#patients / N) in strict mode, the configured count in fallback mode.
std::size_t steps_per_epoch(const PreparedDataset& dataset, const BatchSpec& spec);

/// All batches of one epoch, determined by (seed, epoch).
///
/// Strict mode partitions each class's patients into shuffled queues and
/// fills every batch with class quotas that differ by at most one. A class
/// queue is only refilled once all of its patients have been used, so within
/// a class no patient repeats before every patient has appeared.
std::vector<Batch> plan_epoch(const PreparedDataset& dataset, const BatchSpec& spec);

/// Batch `batch_index` of the epoch in `spec`, strict mode.
Batch sample_batch(const PreparedDataset& dataset, const BatchSpec& spec, std::size_t batch_index = 0);

/// Class-balanced draws where patients may repeat.
Batch sample_batch_fallback(const PreparedDataset& dataset, const BatchSpec& spec, std::size_t batch_index = 0);

/// Label used for balancing; throws ContractError if a strong label is missing.
int balance_label(const PatientEntry& patient, BalanceLabel balance);

}  // namespace wsp
