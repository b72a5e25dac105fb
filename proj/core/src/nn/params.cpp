#include "gnice/nn/params.hpp"

#include <stdexcept>

namespace gnice::nn {

std::size_t ParameterLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("ParameterLayout: negative block shape");
  for (const auto& b : blocks_)
    if (b.name == name) throw std::invalid_argument("ParameterLayout: duplicate block " + name);
  blocks_.push_back({std::move(name), rows, cols, size_});
  size_ += rows * cols;
  return blocks_.size() - 1;
}

std::size_t ParameterLayout::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].name == name) return i;
  throw std::out_of_range("ParameterLayout: no block named " + name);
}

bool ParameterLayout::operator==(const ParameterLayout& o) const {
  if (blocks_.size() != o.blocks_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto &a = blocks_[i], &b = o.blocks_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols || a.offset != b.offset) return false;
  }
  return true;
}

}  // namespace gnice::nn
