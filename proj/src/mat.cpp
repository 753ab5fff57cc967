#include "srrdoc/mat.hpp"

#include <omp.h>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>

namespace srrdoc {

namespace {
int g_threads = 0;
}

void set_kernel_threads(int n) { g_threads = n < 0 ? 0 : n; }

int kernel_threads() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

static void mm_rows(const Mat& a, const Mat& b, Mat& c, int r0, int r1) {
  // i-k-j order, contiguous access on b and c.
  for (int i = r0; i < r1; ++i) {
    double* ci = c.row(i);
    std::memset(ci, 0, sizeof(double) * c.cols);
    const double* ai = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
}

void matmul_serial(const Mat& a, const Mat& b, Mat& c) {
  assert(a.cols == b.rows);
  c = Mat(a.rows, b.cols);
  mm_rows(a, b, c, 0, a.rows);
}

void matmul_omp(const Mat& a, const Mat& b, Mat& c) {
  assert(a.cols == b.rows);
  c = Mat(a.rows, b.cols);
  const int nt = kernel_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
  for (int i = 0; i < a.rows; ++i) mm_rows(a, b, c, i, i + 1);
}

void matmul(const Mat& a, const Mat& b, Mat& c) {
  // Each output row is computed by exactly one thread with the serial inner
  // loop, so the parallel path matches the serial one bit for bit.
  if (static_cast<long long>(a.rows) * b.cols * a.cols < 16384 || kernel_threads() == 1) {
    matmul_serial(a, b, c);
  } else {
    matmul_omp(a, b, c);
  }
}

static void mm_nt_rows(const Mat& a, const Mat& b, Mat& c, int r0, int r1) {
  for (int i = r0; i < r1; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      ci[j] = s;
    }
  }
}

void matmul_nt_serial(const Mat& a, const Mat& b, Mat& c) {
  assert(a.cols == b.cols);
  c = Mat(a.rows, b.rows);
  mm_nt_rows(a, b, c, 0, a.rows);
}

void matmul_nt(const Mat& a, const Mat& b, Mat& c) {
  assert(a.cols == b.cols);
  c = Mat(a.rows, b.rows);
  if (static_cast<long long>(a.rows) * b.rows * a.cols < 16384 || kernel_threads() == 1) {
    mm_nt_rows(a, b, c, 0, a.rows);
    return;
  }
  const int nt = kernel_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
  for (int i = 0; i < a.rows; ++i) mm_nt_rows(a, b, c, i, i + 1);
}

static void mm_tn_cols(const Mat& a, const Mat& b, Mat& c, int k0, int k1) {
  // c(k,:) = sum_m a(m,k) * b(m,:)
  for (int k = k0; k < k1; ++k) {
    double* ck = c.row(k);
    std::memset(ck, 0, sizeof(double) * c.cols);
    for (int m = 0; m < a.rows; ++m) {
      const double amk = a(m, k);
      if (amk == 0.0) continue;
      const double* bm = b.row(m);
      for (int j = 0; j < b.cols; ++j) ck[j] += amk * bm[j];
    }
  }
}

void matmul_tn_serial(const Mat& a, const Mat& b, Mat& c) {
  assert(a.rows == b.rows);
  c = Mat(a.cols, b.cols);
  mm_tn_cols(a, b, c, 0, a.cols);
}

void matmul_tn(const Mat& a, const Mat& b, Mat& c) {
  assert(a.rows == b.rows);
  c = Mat(a.cols, b.cols);
  if (static_cast<long long>(a.cols) * b.cols * a.rows < 16384 || kernel_threads() == 1) {
    mm_tn_cols(a, b, c, 0, a.cols);
    return;
  }
  const int nt = kernel_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
  for (int k = 0; k < a.cols; ++k) mm_tn_cols(a, b, c, k, k + 1);
}

void softmax_rows(Mat& m) {
  for (int i = 0; i < m.rows; ++i) {
    double* r = m.row(i);
    double mx = r[0];
    for (int j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int j = 0; j < m.cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    for (int j = 0; j < m.cols; ++j) r[j] /= sum;
  }
}

void softmax_rows_backward(const Mat& y, const Mat& dy, Mat& dx) {
  dx = Mat(y.rows, y.cols);
  for (int i = 0; i < y.rows; ++i) {
    const double* yi = y.row(i);
    const double* di = dy.row(i);
    double dot = 0.0;
    for (int j = 0; j < y.cols; ++j) dot += yi[j] * di[j];
    double* o = dx.row(i);
    for (int j = 0; j < y.cols; ++j) o[j] = yi[j] * (di[j] - dot);
  }
}

void fill_uniform(Mat& m, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-scale, scale);
  for (auto& x : m.a) x = d(rng);
}

void fill_uniform(std::vector<double>& v, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-scale, scale);
  for (auto& x : v) x = d(rng);
}

}  // namespace srrdoc
