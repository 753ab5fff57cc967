#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace srrdoc {

/// Dense row-major matrix of doubles. The workhorse of the relation model.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return a.size(); }
  void fill(double v) { std::fill(a.begin(), a.end(), v); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// Number of OpenMP threads used by the parallel kernels. 0 = library default.
void set_kernel_threads(int n);
int kernel_threads();

// C = A * B. Serial reference and OpenMP variant; the parallel kernel splits
// by output row, so both produce bit-identical results.
void matmul_serial(const Mat& a, const Mat& b, Mat& c);
void matmul_omp(const Mat& a, const Mat& b, Mat& c);
void matmul(const Mat& a, const Mat& b, Mat& c);

// C = A * B^T
void matmul_nt_serial(const Mat& a, const Mat& b, Mat& c);
void matmul_nt(const Mat& a, const Mat& b, Mat& c);

// C = A^T * B
void matmul_tn_serial(const Mat& a, const Mat& b, Mat& c);
void matmul_tn(const Mat& a, const Mat& b, Mat& c);

// Row-wise softmax in place.
void softmax_rows(Mat& m);

// y[r] = softmax(x[r]); given dy and y, writes dx (may alias dy).
void softmax_rows_backward(const Mat& y, const Mat& dy, Mat& dx);

// Uniform init in [-scale, scale].
void fill_uniform(Mat& m, double scale, std::mt19937_64& rng);
void fill_uniform(std::vector<double>& v, double scale, std::mt19937_64& rng);

}  // namespace srrdoc
