#include "vmamba/checks/oracles.hpp"

#include <cmath>

namespace vmamba::oracle {

namespace {

Matrix multiply(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.size();
  Matrix c(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

long double inf_norm(const Matrix& m) {
  long double best = 0;
  for (const auto& row : m) {
    long double s = 0;
    for (auto v : row) s += std::fabs(v);
    best = std::max(best, s);
  }
  return best;
}

}  // namespace

Matrix matrix_exp(const Matrix& m, int terms) {
  const std::size_t n = m.size();
  int squarings = 0;
  long double scale = 1.0L;
  for (long double norm = inf_norm(m); norm * scale > 0.5L; scale *= 0.5L) ++squarings;

  Matrix scaled = m;
  for (auto& row : scaled)
    for (auto& v : row) v *= scale;

  Matrix result(n, std::vector<long double>(n, 0.0L));
  Matrix term(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i) result[i][i] = term[i][i] = 1.0L;
  for (int k = 1; k < terms; ++k) {
    term = multiply(term, scaled);
    for (auto& row : term)
      for (auto& v : row) v /= static_cast<long double>(k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) result[i][j] += term[i][j];
  }
  for (int s = 0; s < squarings; ++s) result = multiply(result, result);
  return result;
}

ZohReference zoh_block_exp(long double a, long double b, long double delta) {
  const Matrix m = {{delta * a, delta * b}, {0.0L, 0.0L}};
  const Matrix e = matrix_exp(m);
  return {e[0][0], e[0][1]};
}

BasicTensor<double> matmul(const BasicTensor<double>& a, const BasicTensor<double>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("oracle::matmul: inner extents differ");
  BasicTensor<double> c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<long double>(a.at(i, p)) * b.at(p, j);
      c.at(i, j) = static_cast<double>(acc);
    }
  return c;
}

BasicTensor<double> conv3d_tubelets(const BasicTensor<double>& clip, const BasicTensor<double>& w3d,
                                    const BasicTensor<double>& bias) {
  const std::size_t C = clip.dim(0), T = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  const std::size_t d = w3d.dim(0), st = w3d.dim(2), sh = w3d.dim(3), sw = w3d.dim(4);
  const std::size_t nt = T / st, nh = H / sh, nw = W / sw;
  BasicTensor<double> out({nt * nh * nw, d});
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t h = 0; h < nh; ++h)
      for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t o = 0; o < d; ++o) {
          long double acc = bias[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t dt = 0; dt < st; ++dt)
              for (std::size_t dh = 0; dh < sh; ++dh)
                for (std::size_t dw = 0; dw < sw; ++dw) {
                  const std::size_t widx = (((o * C + c) * st + dt) * sh + dh) * sw + dw;
                  const std::size_t pidx = ((c * T + t * st + dt) * H + h * sh + dh) * W + w * sw + dw;
                  acc += static_cast<long double>(w3d[widx]) * clip[pidx];
                }
          out.at((t * nh + h) * nw + w, o) = static_cast<double>(acc);
        }
  return out;
}

BasicTensor<double> conv2d_patches(const BasicTensor<double>& image, const BasicTensor<double>& w2d,
                                   const BasicTensor<double>& bias) {
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const std::size_t d = w2d.dim(0), sh = w2d.dim(2), sw = w2d.dim(3);
  const std::size_t nh = H / sh, nw = W / sw;
  BasicTensor<double> out({nh * nw, d});
  for (std::size_t h = 0; h < nh; ++h)
    for (std::size_t w = 0; w < nw; ++w)
      for (std::size_t o = 0; o < d; ++o) {
        long double acc = bias[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dh = 0; dh < sh; ++dh)
            for (std::size_t dw = 0; dw < sw; ++dw) {
              acc += static_cast<long double>(w2d[((o * C + c) * sh + dh) * sw + dw]) *
                     image[(c * H + h * sh + dh) * W + w * sw + dw];
            }
        out.at(h * nw + w, o) = static_cast<double>(acc);
      }
  return out;
}

BasicTensor<double> recurrence(const BasicTensor<double>& abar, const BasicTensor<double>& bbar,
                               const BasicTensor<double>& c, const BasicTensor<double>& x,
                               const BasicTensor<double>& d) {
  const std::size_t len = x.dim(0), ch = x.dim(1), n = c.dim(1);
  BasicTensor<double> y({len, ch});
  for (std::size_t ci = 0; ci < ch; ++ci) {
    std::vector<long double> h(n, 0.0L);
    for (std::size_t k = 0; k < len; ++k) {
      long double acc = static_cast<long double>(d[ci]) * x.at(k, ci);
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t i = (k * ch + ci) * n + s;
        h[s] = abar[i] * h[s] + bbar[i] * x.at(k, ci);
        acc += c.at(k, s) * h[s];
      }
      y.at(k, ci) = static_cast<double>(acc);
    }
  }
  return y;
}

}  // namespace vmamba::oracle
