#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gnice::nn {

/// Named matrix blocks laid out back to back in one flat parameter vector.
/// Blocks are column-major, matching Eigen's default storage.
class ParameterLayout {
 public:
  struct Block {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index offset = 0;
    Eigen::Index size() const { return rows * cols; }
  };

  /// Returns the block index.
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);

  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(std::size_t i) const { return blocks_[i]; }
  /// Throws std::out_of_range for unknown names.
  std::size_t index_of(const std::string& name) const;
  Eigen::Index size() const { return size_; }

  Eigen::Map<Eigen::MatrixXd> view(Eigen::VectorXd& flat, std::size_t i) const {
    const auto& b = blocks_[i];
    return {flat.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<const Eigen::MatrixXd> view(const Eigen::VectorXd& flat, std::size_t i) const {
    const auto& b = blocks_[i];
    return {flat.data() + b.offset, b.rows, b.cols};
  }

  bool operator==(const ParameterLayout& o) const;

 private:
  std::vector<Block> blocks_;
  Eigen::Index size_ = 0;
};

}  // namespace gnice::nn
