#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "bilevel/data/dataset.hpp"

namespace bilevel::data {

/// The k mini-batches compared at one step. batches[validation_index] plays
/// the validation role; the rest are training batches.
struct BatchGroup {
  std::vector<MiniBatch> batches;
  std::size_t validation_index = 0;
  /// Per-batch class histograms (length class_count each).
  std::vector<std::vector<std::size_t>> histograms;
  bool stratified = true;

  const MiniBatch& validation() const { return batches[validation_index]; }
  std::vector<const MiniBatch*> training() const;
};

struct ComposerOptions {
  std::size_t batch_size = 64;
  std::size_t k = 8;
  /// Identical label histograms across the k batches; false samples freely.
  bool stratified = true;
};

/// Draws batch groups without replacement within an epoch.
///
/// In stratified mode each batch holds alloc[c] examples of class c, where
/// alloc is batch_size split in proportion to the (observed) label counts of
/// the training set with the remainder handed out one per class in class-id
/// order. The epoch ends once some class cannot fill another group; the
/// leftovers wait for the next epoch. With a validation pool, batch 0 of every
/// group comes from the pool (cycling through it independently of epochs) and
/// the other k - 1 from the training set.
class BatchComposer {
 public:
  /// The datasets must outlive the composer. Throws SamplingError naming the
  /// class when a class is too small for its per-group allocation.
  BatchComposer(const Dataset& train, ComposerOptions options, const Dataset* pool,
                std::uint64_t seed);

  /// Reshuffles the training examples; called implicitly on construction.
  void begin_epoch();
  /// Next group of this epoch, or nullopt once the epoch is exhausted.
  std::optional<BatchGroup> next();

  const std::vector<std::size_t>& allocation() const { return allocation_; }
  const ComposerOptions& options() const { return options_; }

 private:
  std::size_t training_batches() const { return options_.k - (pool_ ? 1 : 0); }
  MiniBatch take_pool_batch();
  BatchGroup finish(std::vector<MiniBatch> batches) const;

  const Dataset* train_;
  const Dataset* pool_;
  ComposerOptions options_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> allocation_;
  // Stratified mode: per-class shuffled queues with read cursors.
  std::vector<std::vector<std::size_t>> queues_;
  std::vector<std::size_t> cursors_;
  std::vector<std::vector<std::size_t>> pool_queues_;
  std::vector<std::size_t> pool_cursors_;
  // Free mode: one shuffled order over all examples.
  std::vector<std::size_t> order_;
  std::size_t order_cursor_ = 0;
  std::vector<std::size_t> pool_order_;
  std::size_t pool_order_cursor_ = 0;
};

/// One stratified group drawn from a fresh permutation of `ds`.
BatchGroup compose_batch_group(const Dataset& ds, std::size_t batch_size, std::size_t k,
                               const Dataset* validation_pool, std::mt19937_64& rng);

/// Shuffled fixed-size batches, one pass per epoch, incomplete tail dropped.
class EpochBatcher {
 public:
  EpochBatcher(const Dataset& ds, std::size_t batch_size, std::uint64_t seed);

  void begin_epoch();
  std::optional<MiniBatch> next();

 private:
  const Dataset* ds_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Class-stratified split: round-half-up(ratio * n_c) examples of every class
/// (keeping at least one in the training part) move to the pool. Ratio 0
/// returns (ds, empty pool). Throws ConfigError unless 0 <= ratio < 1.
std::pair<Dataset, Dataset> split_validation_pool(const Dataset& ds, double ratio,
                                                  std::mt19937_64& rng);

/// round(x) with halves rounded up, for non-negative x.
std::size_t round_half_up(double x);

}  // namespace bilevel::data
