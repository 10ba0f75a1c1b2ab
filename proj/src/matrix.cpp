#include "markovdetect/matrix.hpp"

#include <algorithm>

#include "markovdetect/errors.hpp"

namespace markovdetect {

std::vector<double> Matrix::row(std::size_t i) const {
  std::vector<double> out(cols_);
  for (std::size_t j = 0; j < cols_; ++j) out[j] = (*this)(i, j);
  return out;
}

void Matrix::set_row(std::size_t i, std::span<const double> values) {
  if (values.size() != cols_) throw InvalidInput("row length does not match column count");
  for (std::size_t j = 0; j < cols_; ++j) (*this)(i, j) = values[j];
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) {
    auto src = m.col(j);
    auto dst = out.col(j);
    for (std::size_t i = 0; i < rows.size(); ++i) dst[i] = src[rows[i]];
  }
  return out;
}

Matrix select_cols(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    auto src = m.col(cols[j]);
    std::copy(src.begin(), src.end(), out.col(j).begin());
  }
  return out;
}

}  // namespace markovdetect
