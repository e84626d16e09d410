#pragma once

#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "asyflexa/common.hpp"

namespace asyflexa {

/// Partition of the n coordinates into N contiguous blocks.
class BlockPartition {
 public:
  explicit BlockPartition(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.empty()) throw StructuralError("partition: no blocks");
    offsets_.resize(sizes_.size() + 1, 0);
    for (std::size_t i = 0; i < sizes_.size(); ++i) {
      if (sizes_[i] < 1) throw StructuralError("partition: block size < 1");
      offsets_[i + 1] = offsets_[i] + sizes_[i];
    }
  }

  static std::shared_ptr<const BlockPartition> uniform(int n, int blocks) {
    if (blocks < 1 || n < blocks)
      throw StructuralError("partition: need 1 <= N <= n");
    std::vector<int> sizes(blocks, n / blocks);
    for (int i = 0; i < n % blocks; ++i) sizes[i] += 1;
    return std::make_shared<BlockPartition>(std::move(sizes));
  }

  int count() const { return static_cast<int>(sizes_.size()); }
  int dim() const { return offsets_.back(); }
  int size(int i) const { return sizes_[i]; }
  int offset(int i) const { return offsets_[i]; }
  const std::vector<int>& sizes() const { return sizes_; }

  int block_of(int coord) const {
    for (int i = 0; i < count(); ++i)
      if (coord < offsets_[i + 1]) return i;
    throw StructuralError("partition: coordinate out of range");
  }

 private:
  std::vector<int> sizes_;
  std::vector<int> offsets_;
};

using PartitionPtr = std::shared_ptr<const BlockPartition>;

/// A real vector of length n with block views defined by a partition.
class BlockVector {
 public:
  BlockVector() = default;
  BlockVector(PartitionPtr part, std::vector<double> data)
      : part_(std::move(part)), data_(std::move(data)) {
    if (static_cast<int>(data_.size()) != part_->dim())
      throw StructuralError("block vector: dimension mismatch");
  }
  explicit BlockVector(PartitionPtr part)
      : part_(std::move(part)), data_(part_->dim(), 0.0) {}

  const PartitionPtr& partition() const { return part_; }
  int dim() const { return part_->dim(); }
  int blocks() const { return part_->count(); }

  std::span<double> block(int i) {
    return {data_.data() + part_->offset(i),
            static_cast<std::size_t>(part_->size(i))};
  }
  std::span<const double> block(int i) const {
    return {data_.data() + part_->offset(i),
            static_cast<std::size_t>(part_->size(i))};
  }
  std::span<double> all() { return {data_.data(), data_.size()}; }
  std::span<const double> all() const { return {data_.data(), data_.size()}; }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

 private:
  PartitionPtr part_;
  std::vector<double> data_;
};

}  // namespace asyflexa
