#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgmatch {

// Error type thrown by every module for contract violations.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major matrix of doubles. All numerics in the pipeline run at
// 64-bit precision; serialization narrows to f32 at the file boundary.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) throw Error("Mat: value count does not match shape");
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Mat full(std::size_t rows, std::size_t cols, double v) {
    Mat m(rows, cols);
    for (double& x : m.data_) x = v;
    return m;
  }
  static Mat row_vector(std::vector<double> values) {
    std::size_t n = values.size();
    return Mat(1, n, std::move(values));
  }
  static Mat col_vector(std::vector<double> values) {
    std::size_t n = values.size();
    return Mat(n, 1, std::move(values));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
  const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void check_same_shape(const Mat& a, const Mat& b, const char* where) {
  if (!a.same_shape(b))
    throw Error(std::string(where) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
}

// C = A * B
inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw Error("matmul: inner dimension mismatch");
  Mat c(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.row_ptr(i);
    const double* ai = a.row_ptr(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b.row_ptr(p);
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

// C = A * B^T
inline Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw Error("matmul_nt: inner dimension mismatch");
  Mat c(a.rows(), b.rows());
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row_ptr(i);
    double* ci = c.row_ptr(i);
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.row_ptr(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
  return c;
}

// C = A^T * B
inline Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw Error("matmul_tn: inner dimension mismatch");
  Mat c(a.cols(), b.cols());
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.row_ptr(p);
    const double* bp = b.row_ptr(p);
    for (std::size_t i = 0; i < n; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c.row_ptr(i);
      for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Mat add(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "add");
  Mat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline Mat sub(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "sub");
  Mat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline Mat hadamard(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "hadamard");
  Mat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

inline Mat scale(const Mat& a, double s) {
  Mat c = a;
  for (double& x : c.data()) x *= s;
  return c;
}

inline Mat add_scalar(const Mat& a, double s) {
  Mat c = a;
  for (double& x : c.data()) x += s;
  return c;
}

template <typename F>
inline Mat apply(const Mat& a, F&& f) {
  Mat c = a;
  for (double& x : c.data()) x = f(x);
  return c;
}

inline double frobenius_dot(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "frobenius_dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

inline double sum_all(const Mat& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return s;
}

inline double max_abs(const Mat& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::fabs(x));
  return m;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

inline bool all_finite(const Mat& a) {
  for (double x : a.data())
    if (!std::isfinite(x)) return false;
  return true;
}

inline double vec_norm(const Mat& a) { return std::sqrt(frobenius_dot(a, a)); }

// Row-wise softmax.
inline Mat row_softmax(const Mat& a) {
  Mat c = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* r = c.row_ptr(i);
    double mx = r[0];
    for (std::size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, r[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      r[j] = std::exp(r[j] - mx);
      s += r[j];
    }
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] /= s;
  }
  return c;
}

// log(sum(exp(row))) for each row -> n x 1.
inline Mat row_logsumexp(const Mat& a) {
  Mat c(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* r = a.row_ptr(i);
    double mx = r[0];
    for (std::size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, r[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += std::exp(r[j] - mx);
    c(i, 0) = mx + std::log(s);
  }
  return c;
}

// log(sum(exp(col))) for each column -> 1 x m.
inline Mat col_logsumexp(const Mat& a) {
  Mat c(1, a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double mx = a(0, j);
    for (std::size_t i = 1; i < a.rows(); ++i) mx = std::max(mx, a(i, j));
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += std::exp(a(i, j) - mx);
    c(0, j) = mx + std::log(s);
  }
  return c;
}

inline Mat mean_rows(const Mat& a) {
  if (a.rows() == 0) throw Error("mean_rows: empty input");
  Mat c(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(0, j) += a(i, j);
  const double inv = 1.0 / static_cast<double>(a.rows());
  for (double& x : c.data()) x *= inv;
  return c;
}

// L2-normalize each row; zero rows stay zero.
inline Mat l2_normalize_rows(const Mat& a) {
  Mat c = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    const double* r = a.row_ptr(i);
    for (std::size_t j = 0; j < a.cols(); ++j) s += r[j] * r[j];
    if (s > 0.0) {
      const double inv = 1.0 / std::sqrt(s);
      double* w = c.row_ptr(i);
      for (std::size_t j = 0; j < a.cols(); ++j) w[j] *= inv;
    }
  }
  return c;
}

inline Mat concat_cols(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw Error("concat_cols: row count mismatch");
  Mat c(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.cols(); ++j) c(i, a.cols() + j) = b(i, j);
  }
  return c;
}

inline Mat slice_cols(const Mat& a, std::size_t from, std::size_t to) {
  if (from > to || to > a.cols()) throw Error("slice_cols: bad range");
  Mat c(a.rows(), to - from);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = from; j < to; ++j) c(i, j - from) = a(i, j);
  return c;
}

}  // namespace lgmatch
