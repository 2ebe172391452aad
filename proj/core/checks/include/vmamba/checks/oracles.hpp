#pragma once

// Reference implementations written without touching the library's kernels.
// They are slow on purpose and exist only to be compared against.

#include <vector>

#include "vmamba/tensor.hpp"

namespace vmamba::oracle {

using Matrix = std::vector<std::vector<long double>>;

/// exp(M) by a 20-term Taylor series with scaling and squaring.
Matrix matrix_exp(const Matrix& m, int terms = 20);

struct ZohReference {
  long double abar;
  long double bbar;
};

/// Zero-order hold for one diagonal entry via the block exponential
/// exp([[delta*a, delta*b], [0, 0]]) = [[Abar, Bbar], [0, 1]].
ZohReference zoh_block_exp(long double a, long double b, long double delta);

/// c[i,j] = sum_p a[i,p] b[p,j], triple loop with long double accumulation.
BasicTensor<double> matmul(const BasicTensor<double>& a, const BasicTensor<double>& b);

/// Strided non-overlapping 3D convolution of a (C,T,H,W) clip with
/// (d,C,st,sh,sw) weights; tokens in (t,h,w) raster order, shape (n, d).
BasicTensor<double> conv3d_tubelets(const BasicTensor<double>& clip, const BasicTensor<double>& w3d,
                                    const BasicTensor<double>& bias);

/// Strided non-overlapping 2D convolution of a (C,H,W) image with
/// (d,C,sh,sw) weights; shape (nh*nw, d).
BasicTensor<double> conv2d_patches(const BasicTensor<double>& image, const BasicTensor<double>& w2d,
                                   const BasicTensor<double>& bias);

/// Recurrence h_k = Abar h_{k-1} + Bbar x_k, y_k = <C, h_k> + D x_k on
/// explicit per-step discrete parameters, one channel at a time.
/// abar, bbar: [len, ch, N]; c: [len, N]; x: [len, ch]; d: [ch].
BasicTensor<double> recurrence(const BasicTensor<double>& abar, const BasicTensor<double>& bbar,
                               const BasicTensor<double>& c, const BasicTensor<double>& x,
                               const BasicTensor<double>& d);

}  // namespace vmamba::oracle
