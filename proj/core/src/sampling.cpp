#include "wsp/sampling.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "wsp/rng.hpp"

namespace wsp {

namespace {

struct ClassPool {
  int label = 0;
  std::vector<std::size_t> patients;  // indices into PreparedDataset::patients
};

std::vector<ClassPool> class_pools(const PreparedDataset& dataset, BalanceLabel balance) {
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < dataset.patients.size(); ++i) {
    if (dataset.patients[i].slices.empty()) continue;
    by_label[balance_label(dataset.patients[i], balance)].push_back(i);
  }
  std::vector<ClassPool> pools;
  for (auto& [label, members] : by_label) pools.push_back({label, std::move(members)});
  return pools;
}

/// Split n across classes as evenly as possible, capped by `capacity`.
/// Leftover units go to classes in the order given by `priority`.
std::vector<std::size_t> balanced_quotas(std::size_t n, const std::vector<std::size_t>& capacity,
                                         const std::vector<std::size_t>& priority) {
  std::vector<std::size_t> quota(capacity.size(), 0);
  std::size_t remaining = n;
  while (remaining > 0) {
    std::vector<std::size_t> open;
    for (std::size_t c : priority) {
      if (quota[c] < capacity[c]) open.push_back(c);
    }
    if (open.empty()) break;
    const std::size_t each = remaining / open.size();
    if (each == 0) {
      for (std::size_t k = 0; k < remaining; ++k) ++quota[open[k]];
      break;
    }
    for (std::size_t c : open) {
      const std::size_t take = std::min(each, capacity[c] - quota[c]);
      quota[c] += take;
      remaining -= take;
    }
  }
  return quota;
}

std::size_t pick_slice(const PatientEntry& patient, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, patient.slices.size() - 1);
  return patient.slices[dist(rng)];
}

}  // namespace

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::one_slice_per_patient ? "one_slice_per_patient" : "fallback_balanced";
}

SamplingMode sampling_mode_from_string(const std::string& name) {
  if (name == "one_slice_per_patient") return SamplingMode::one_slice_per_patient;
  if (name == "fallback_balanced") return SamplingMode::fallback_balanced;
  throw ConfigError("unknown sampling mode '" + name + "'");
}

void BatchSpec::validate() const {
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ConfigError("batch size must be even and at least 2, got " + std::to_string(batch_size));
  }
}

int balance_label(const PatientEntry& patient, BalanceLabel balance) {
  if (balance == BalanceLabel::weak) return patient.y_weak;
  if (!patient.y_strong) {
    throw ContractError("patient " + std::to_string(patient.patient_id) + " has no strong label");
  }
  return *patient.y_strong;
}

std::size_t steps_per_epoch(const PreparedDataset& dataset, const BatchSpec& spec) {
  spec.validate();
  std::size_t patients = 0;
  for (const auto& pool : class_pools(dataset, spec.balance)) patients += pool.patients.size();
  if (patients == 0) throw ContractError("sampling: dataset has no patients with slices");
  if (spec.mode == SamplingMode::fallback_balanced && spec.fallback_steps > 0) return spec.fallback_steps;
  return (patients + spec.batch_size - 1) / spec.batch_size;
}

std::vector<Batch> plan_epoch(const PreparedDataset& dataset, const BatchSpec& spec) {
  const std::size_t steps = steps_per_epoch(dataset, spec);
  std::vector<Batch> batches;
  batches.reserve(steps);
  if (spec.mode == SamplingMode::fallback_balanced) {
    for (std::size_t b = 0; b < steps; ++b) batches.push_back(sample_batch_fallback(dataset, spec, b));
    return batches;
  }

  std::vector<ClassPool> pools = class_pools(dataset, spec.balance);
  std::size_t total = 0;
  for (const auto& pool : pools) total += pool.patients.size();
  if (total < spec.batch_size) {
    throw FallbackRequired("one-slice-per-patient sampling needs at least " + std::to_string(spec.batch_size) +
                           " patients, dataset has " + std::to_string(total) + "; use fallback_balanced");
  }

  Rng rng = make_rng(spec.seed, {0x73616dULL, spec.epoch});
  std::vector<std::vector<std::size_t>> queues(pools.size());
  auto refill = [&](std::size_t c, const std::set<std::size_t>& exclude) {
    std::vector<std::size_t> fresh = pools[c].patients;
    std::shuffle(fresh.begin(), fresh.end(), rng);
    // Patients already in the current batch go to the back of the new round.
    std::stable_partition(fresh.begin(), fresh.end(), [&](std::size_t p) { return !exclude.count(p); });
    // Queues are consumed from the back.
    queues[c].insert(queues[c].begin(), fresh.rbegin(), fresh.rend());
  };
  for (std::size_t c = 0; c < pools.size(); ++c) refill(c, {});

  std::vector<std::size_t> capacity(pools.size());
  for (std::size_t c = 0; c < pools.size(); ++c) capacity[c] = pools[c].patients.size();

  for (std::size_t b = 0; b < steps; ++b) {
    std::vector<std::size_t> priority(pools.size());
    std::iota(priority.begin(), priority.end(), std::size_t{0});
    std::stable_sort(priority.begin(), priority.end(),
                     [&](std::size_t x, std::size_t y) { return queues[x].size() > queues[y].size(); });
    const std::vector<std::size_t> quota = balanced_quotas(spec.batch_size, capacity, priority);

    Rng slice_rng = make_rng(spec.seed, {0x736c63ULL, spec.epoch, b});
    Batch batch;
    std::set<std::size_t> in_batch;
    for (std::size_t c = 0; c < pools.size(); ++c) {
      for (std::size_t k = 0; k < quota[c]; ++k) {
        if (queues[c].empty()) refill(c, in_batch);
        std::size_t patient = queues[c].back();
        if (in_batch.count(patient)) {
          // Only reachable right after a refill; take the first unused patient instead.
          auto it = std::find_if(queues[c].rbegin(), queues[c].rend(),
                                 [&](std::size_t p) { return !in_batch.count(p); });
          patient = *it;
          queues[c].erase(std::next(it).base());
        } else {
          queues[c].pop_back();
        }
        in_batch.insert(patient);
        batch.push_back(pick_slice(dataset.patients[patient], slice_rng));
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

Batch sample_batch(const PreparedDataset& dataset, const BatchSpec& spec, std::size_t batch_index) {
  BatchSpec strict = spec;
  strict.mode = SamplingMode::one_slice_per_patient;
  std::vector<Batch> epoch = plan_epoch(dataset, strict);
  if (batch_index >= epoch.size()) {
    throw ContractError("batch index " + std::to_string(batch_index) + " beyond the " + std::to_string(epoch.size()) +
                        " batches of an epoch");
  }
  return epoch[batch_index];
}

Batch sample_batch_fallback(const PreparedDataset& dataset, const BatchSpec& spec, std::size_t batch_index) {
  spec.validate();
  std::vector<ClassPool> pools = class_pools(dataset, spec.balance);
  if (pools.empty()) throw ContractError("sampling: dataset has no patients with slices");
  Rng rng = make_rng(spec.seed, {0x666262ULL, spec.epoch, batch_index});

  // Random tie-break for the leftover units keeps every class on equal footing.
  std::vector<std::size_t> priority(pools.size());
  std::iota(priority.begin(), priority.end(), std::size_t{0});
  std::shuffle(priority.begin(), priority.end(), rng);
  const std::vector<std::size_t> unlimited(pools.size(), spec.batch_size);
  const std::vector<std::size_t> quota = balanced_quotas(spec.batch_size, unlimited, priority);

  Batch batch;
  for (std::size_t c = 0; c < pools.size(); ++c) {
    std::uniform_int_distribution<std::size_t> who(0, pools[c].patients.size() - 1);
    for (std::size_t k = 0; k < quota[c]; ++k) {
      batch.push_back(pick_slice(dataset.patients[pools[c].patients[who(rng)]], rng));
    }
  }
  return batch;
}

}  // namespace wsp
