#include "bilevel/data/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bilevel/error.hpp"

namespace bilevel::data {
namespace {

std::vector<std::vector<std::size_t>> members_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> members(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) members[ds.labels[i]].push_back(i);
  return members;
}

// batch_size split across classes in proportion to their counts; the
// remainder goes one per class, in class-id order, to classes present.
std::vector<std::size_t> proportional_allocation(const std::vector<std::size_t>& counts,
                                                 std::size_t batch_size) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  std::vector<std::size_t> alloc(counts.size(), 0);
  if (total == 0) return alloc;
  std::size_t used = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    alloc[c] = batch_size * counts[c] / total;
    used += alloc[c];
  }
  for (std::size_t c = 0; used < batch_size; c = (c + 1) % counts.size()) {
    if (counts[c] > 0) {
      ++alloc[c];
      ++used;
    }
  }
  return alloc;
}

std::vector<std::size_t> histogram(const MiniBatch& batch, std::size_t classes) {
  std::vector<std::size_t> h(classes, 0);
  for (int y : batch.labels) ++h[static_cast<std::size_t>(y)];
  return h;
}

}  // namespace

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

std::vector<const MiniBatch*> BatchGroup::training() const {
  std::vector<const MiniBatch*> out;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    if (i != validation_index) out.push_back(&batches[i]);
  }
  return out;
}

BatchComposer::BatchComposer(const Dataset& train, ComposerOptions options, const Dataset* pool,
                             std::uint64_t seed)
    : train_(&train),
      pool_(pool && !pool->empty() ? pool : nullptr),
      options_(options),
      rng_(seed) {
  if (options_.k < 2) throw ConfigError("need k >= 2 mini-batches per group");
  if (options_.batch_size == 0) throw ConfigError("batch size must be positive");
  if (pool_ && pool_->class_count != train_->class_count) {
    throw ConfigError("validation pool and training set disagree on the class count");
  }
  const std::size_t from_train = training_batches();

  if (options_.stratified) {
    const auto counts = train_->class_counts();
    allocation_ = proportional_allocation(counts, options_.batch_size);
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] < from_train * allocation_[c]) {
        throw SamplingError("class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                            " examples, fewer than the " + std::to_string(allocation_[c]) + " x " +
                            std::to_string(from_train) + " needed per group");
      }
    }
    if (pool_) {
      pool_queues_ = members_by_class(*pool_);
      pool_cursors_.assign(pool_queues_.size(), 0);
      for (std::size_t c = 0; c < allocation_.size(); ++c) {
        if (pool_queues_[c].size() < allocation_[c]) {
          throw SamplingError("class " + std::to_string(c) + " has " +
                              std::to_string(pool_queues_[c].size()) +
                              " validation-pool examples, fewer than the " +
                              std::to_string(allocation_[c]) + " needed per batch");
        }
        std::shuffle(pool_queues_[c].begin(), pool_queues_[c].end(), rng_);
      }
    }
  } else {
    if (train_->size() < from_train * options_.batch_size) {
      throw SamplingError("training set of " + std::to_string(train_->size()) +
                          " examples cannot fill one group of " + std::to_string(from_train) +
                          " batches of " + std::to_string(options_.batch_size));
    }
    if (pool_) {
      if (pool_->size() < options_.batch_size) {
        throw SamplingError("validation pool smaller than one batch");
      }
      pool_order_.resize(pool_->size());
      std::iota(pool_order_.begin(), pool_order_.end(), std::size_t{0});
      std::shuffle(pool_order_.begin(), pool_order_.end(), rng_);
    }
  }
  begin_epoch();
}

void BatchComposer::begin_epoch() {
  if (options_.stratified) {
    queues_ = members_by_class(*train_);
    for (auto& q : queues_) std::shuffle(q.begin(), q.end(), rng_);
    cursors_.assign(queues_.size(), 0);
  } else {
    order_.resize(train_->size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    order_cursor_ = 0;
  }
}

MiniBatch BatchComposer::take_pool_batch() {
  std::vector<std::size_t> idx;
  idx.reserve(options_.batch_size);
  if (options_.stratified) {
    for (std::size_t c = 0; c < allocation_.size(); ++c) {
      auto& q = pool_queues_[c];
      for (std::size_t j = 0; j < allocation_[c]; ++j) {
        if (pool_cursors_[c] == q.size()) {
          std::shuffle(q.begin(), q.end(), rng_);
          pool_cursors_[c] = 0;
        }
        idx.push_back(q[pool_cursors_[c]++]);
      }
    }
    std::shuffle(idx.begin(), idx.end(), rng_);
  } else {
    for (std::size_t j = 0; j < options_.batch_size; ++j) {
      if (pool_order_cursor_ == pool_order_.size()) {
        std::shuffle(pool_order_.begin(), pool_order_.end(), rng_);
        pool_order_cursor_ = 0;
      }
      idx.push_back(pool_order_[pool_order_cursor_++]);
    }
  }
  return pool_->batch(idx);
}

BatchGroup BatchComposer::finish(std::vector<MiniBatch> batches) const {
  BatchGroup group;
  group.stratified = options_.stratified;
  group.validation_index = 0;
  for (const auto& b : batches) group.histograms.push_back(histogram(b, train_->class_count));
  group.batches = std::move(batches);
  return group;
}

std::optional<BatchGroup> BatchComposer::next() {
  const std::size_t from_train = training_batches();
  std::vector<MiniBatch> batches;
  batches.reserve(options_.k);

  if (options_.stratified) {
    for (std::size_t c = 0; c < allocation_.size(); ++c) {
      if (queues_[c].size() - cursors_[c] < from_train * allocation_[c]) return std::nullopt;
    }
    if (pool_) batches.push_back(take_pool_batch());
    for (std::size_t b = 0; b < from_train; ++b) {
      std::vector<std::size_t> idx;
      idx.reserve(options_.batch_size);
      for (std::size_t c = 0; c < allocation_.size(); ++c) {
        for (std::size_t j = 0; j < allocation_[c]; ++j) idx.push_back(queues_[c][cursors_[c]++]);
      }
      std::shuffle(idx.begin(), idx.end(), rng_);
      batches.push_back(train_->batch(idx));
    }
  } else {
    if (order_.size() - order_cursor_ < from_train * options_.batch_size) return std::nullopt;
    if (pool_) batches.push_back(take_pool_batch());
    for (std::size_t b = 0; b < from_train; ++b) {
      std::span<const std::size_t> idx(order_.data() + order_cursor_, options_.batch_size);
      order_cursor_ += options_.batch_size;
      batches.push_back(train_->batch(idx));
    }
  }
  return finish(std::move(batches));
}

BatchGroup compose_batch_group(const Dataset& ds, std::size_t batch_size, std::size_t k,
                               const Dataset* validation_pool, std::mt19937_64& rng) {
  BatchComposer composer(ds, ComposerOptions{batch_size, k, true}, validation_pool, rng());
  auto group = composer.next();
  if (!group) throw SamplingError("dataset too small for one batch group");
  return std::move(*group);
}

EpochBatcher::EpochBatcher(const Dataset& ds, std::size_t batch_size, std::uint64_t seed)
    : ds_(&ds), batch_size_(batch_size), rng_(seed) {
  if (batch_size_ == 0) throw ConfigError("batch size must be positive");
  if (ds.size() < batch_size_) {
    throw SamplingError("dataset of " + std::to_string(ds.size()) +
                        " examples cannot fill a batch of " + std::to_string(batch_size_));
  }
  begin_epoch();
}

void EpochBatcher::begin_epoch() {
  order_.resize(ds_->size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::optional<MiniBatch> EpochBatcher::next() {
  if (order_.size() - cursor_ < batch_size_) return std::nullopt;
  std::span<const std::size_t> idx(order_.data() + cursor_, batch_size_);
  cursor_ += batch_size_;
  return ds_->batch(idx);
}

std::pair<Dataset, Dataset> split_validation_pool(const Dataset& ds, double ratio,
                                                  std::mt19937_64& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ConfigError("validation ratio must lie in [0, 1), got " + std::to_string(ratio));
  }
  if (ratio == 0.0) {
    Dataset pool = ds.subset({}, Split::ValidationPool);
    return {ds, std::move(pool)};
  }
  std::vector<bool> in_pool(ds.size(), false);
  for (auto& members : members_by_class(ds)) {
    std::shuffle(members.begin(), members.end(), rng);
    std::size_t take = round_half_up(ratio * static_cast<double>(members.size()));
    if (!members.empty()) take = std::min(take, members.size() - 1);
    for (std::size_t j = 0; j < take; ++j) in_pool[members[j]] = true;
  }
  std::vector<std::size_t> train_idx, pool_idx;
  for (std::size_t i = 0; i < ds.size(); ++i) (in_pool[i] ? pool_idx : train_idx).push_back(i);
  return {ds.subset(train_idx, ds.split), ds.subset(pool_idx, Split::ValidationPool)};
}

}  // namespace bilevel::data
