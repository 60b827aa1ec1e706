#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "stosaddle/landscape.hpp"

namespace stosaddle {

namespace {

struct NnShape {
  int depth;
  std::vector<int> dims;     // d_0 .. d_H
  std::vector<int> offsets;  // flat offset of each layer block
  int total;

  explicit NnShape(const LinearNnSpec& spec) : depth(spec.depth), dims(spec.dims) {
    if (depth < 1) throw std::invalid_argument("linear_nn: depth must be >= 1");
    if (static_cast<int>(dims.size()) != depth + 1)
      throw std::invalid_argument("linear_nn: dims must list d_0..d_H");
    for (int d : dims)
      if (d < 1) throw std::invalid_argument("linear_nn: dims must be positive");
    offsets.resize(depth);
    int off = 0;
    for (int h = 0; h < depth; ++h) {
      offsets[h] = off;
      off += dims[h + 1] * dims[h];  // layer h+1 maps d_h -> d_{h+1}
    }
    total = off;
  }

  // Layer h in 0..H-1 has shape d_{h+1} x d_h, stored column-major.
  Eigen::Map<const Mat> layer(const Vec& w, int h) const {
    return Eigen::Map<const Mat>(w.data() + offsets[h], dims[h + 1], dims[h]);
  }
  Eigen::Map<Mat> layer(Vec& w, int h) const {
    return Eigen::Map<Mat>(w.data() + offsets[h], dims[h + 1], dims[h]);
  }
};

// Gradient of ||W_H ... W_1 Xs - Ys||_F^2 with respect to every layer,
// written into g (flat). Returns the loss value.
double nn_loss_and_grad(const NnShape& shape, const Vec& w, const Mat& Xs, const Mat& Ys,
                        Vec* g) {
  const int H = shape.depth;
  // Forward prefixes: A[h] = W_h ... W_1 X (A[0] = X).
  std::vector<Mat> A(H + 1);
  A[0] = Xs;
  for (int h = 0; h < H; ++h) A[h + 1] = shape.layer(w, h) * A[h];
  const Mat R = A[H] - Ys;
  if (g) {
    // Backward suffixes: B = W_H ... W_{h+2} while walking h downward.
    Mat B = Mat::Identity(shape.dims[H], shape.dims[H]);
    for (int h = H - 1; h >= 0; --h) {
      shape.layer(*g, h) = 2.0 * B.transpose() * R * A[h].transpose();
      if (h > 0) B = B * shape.layer(w, h);
    }
  }
  return R.squaredNorm();
}

// Directional derivative of the gradient along v (exact product rule over
// the layer products).
void nn_hvp(const NnShape& shape, const Vec& w, const Vec& v, const Mat& Xs, const Mat& Ys,
            Vec* out) {
  const int H = shape.depth;
  std::vector<Mat> A(H + 1), dA(H + 1);
  A[0] = Xs;
  dA[0] = Mat::Zero(Xs.rows(), Xs.cols());
  for (int h = 0; h < H; ++h) {
    A[h + 1] = shape.layer(w, h) * A[h];
    dA[h + 1] = shape.layer(v, h) * A[h] + shape.layer(w, h) * dA[h];
  }
  const Mat R = A[H] - Ys;
  const Mat& dR = dA[H];

  Mat B = Mat::Identity(shape.dims[H], shape.dims[H]);
  Mat dB = Mat::Zero(shape.dims[H], shape.dims[H]);
  for (int h = H - 1; h >= 0; --h) {
    shape.layer(*out, h) = 2.0 * (dB.transpose() * R * A[h].transpose() +
                                  B.transpose() * dR * A[h].transpose() +
                                  B.transpose() * R * dA[h].transpose());
    if (h > 0) {
      dB = dB * shape.layer(w, h) + B * shape.layer(v, h);
      B = B * shape.layer(w, h);
    }
  }
}

Mat select_columns(const Mat& M, const std::vector<int>& idx) {
  Mat out(M.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = M.col(idx[j]);
  return out;
}

}  // namespace

LinearNnSpec make_linear_nn_spec(int depth, const std::vector<int>& dims, int n_samples,
                                 std::uint64_t data_seed, std::vector<int> modes) {
  if (static_cast<int>(dims.size()) != depth + 1)
    throw std::invalid_argument("make_linear_nn_spec: dims must list d_0..d_H");
  LinearNnSpec spec;
  spec.depth = depth;
  spec.dims = dims;
  spec.modes = std::move(modes);
  RngState rng(data_seed, 0, phase::data);
  spec.X = Mat(dims.front(), n_samples);
  spec.Y = Mat(dims.back(), n_samples);
  for (int j = 0; j < n_samples; ++j)
    for (int i = 0; i < dims.front(); ++i) spec.X(i, j) = rng.normal();
  for (int j = 0; j < n_samples; ++j)
    for (int i = 0; i < dims.back(); ++i) spec.Y(i, j) = rng.normal();
  return spec;
}

Landscape build_linear_nn(const LinearNnSpec& spec) {
  const NnShape shape(spec);
  if (spec.X.rows() != shape.dims.front() || spec.Y.rows() != shape.dims.back() ||
      spec.X.cols() != spec.Y.cols() || spec.X.cols() < 1)
    throw std::invalid_argument("linear_nn: data dimensions mismatch");
  const int N = static_cast<int>(spec.X.cols());

  // Reject degenerate data up front; the reference saddle needs XX' invertible.
  {
    const Mat Sxx = spec.X * spec.X.transpose();
    Eigen::FullPivLU<Mat> lu(Sxx);
    if (!lu.isInvertible()) throw std::invalid_argument("linear_nn: singular Sigma_XX");
  }

  auto data = std::make_shared<std::pair<Mat, Mat>>(spec.X, spec.Y);
  auto shp = std::make_shared<NnShape>(shape);

  Landscape l;
  l.dimension = shape.total;
  l.name = "linear_nn";
  l.sample_count = N;

  l.energy = [shp, data](const Vec& w) {
    return nn_loss_and_grad(*shp, w, data->first, data->second, nullptr);
  };
  l.gradient = [shp, data](const Vec& w) {
    Vec g(shp->total);
    nn_loss_and_grad(*shp, w, data->first, data->second, &g);
    return g;
  };
  l.hvp = [shp, data](const Vec& w, const Vec& v) {
    Vec out(shp->total);
    nn_hvp(*shp, w, v, data->first, data->second, &out);
    return out;
  };
  l.minibatch_gradient = [shp, data](const Vec& w, const std::vector<int>& idx) {
    const Mat Xs = select_columns(data->first, idx);
    const Mat Ys = select_columns(data->second, idx);
    Vec g(shp->total);
    nn_loss_and_grad(*shp, w, Xs, Ys, &g);
    return g;
  };
  l.minibatch_hvp = [shp, data](const Vec& w, const Vec& v, const std::vector<int>& idx) {
    const Mat Xs = select_columns(data->first, idx);
    const Mat Ys = select_columns(data->second, idx);
    Vec out(shp->total);
    nn_hvp(*shp, w, v, Xs, Ys, &out);
    return out;
  };

  l.known_saddle = nn_reference_saddle(spec);
  return l;
}

Vec nn_reference_saddle(const LinearNnSpec& spec) {
  const NnShape shape(spec);
  const int H = shape.depth;
  const int d0 = shape.dims.front();
  const int dy = shape.dims.back();
  for (int h = 1; h < H; ++h)
    if (shape.dims[h] != d0)
      throw std::invalid_argument("nn_reference_saddle: hidden dims must equal d_0");

  const int r_max = *std::min_element(shape.dims.begin(), shape.dims.end());
  for (int s : spec.modes)
    if (s < 0 || s >= r_max) throw std::invalid_argument("nn_reference_saddle: mode out of range");

  const Mat Sxx = spec.X * spec.X.transpose();
  Eigen::FullPivLU<Mat> lu(Sxx);
  if (!lu.isInvertible()) throw std::invalid_argument("nn_reference_saddle: singular Sigma_XX");
  const Mat Syx = spec.Y * spec.X.transpose();
  const Mat SxxInv = lu.inverse();
  const Mat Sigma = Syx * SxxInv * Syx.transpose();

  // Modes ordered by decreasing explained variance.
  Eigen::SelfAdjointEigenSolver<Mat> es(Sigma);
  Mat U(dy, dy);
  for (int j = 0; j < dy; ++j) U.col(j) = es.eigenvectors().col(dy - 1 - j);

  Mat Us(dy, static_cast<Eigen::Index>(spec.modes.size()));
  for (std::size_t j = 0; j < spec.modes.size(); ++j)
    Us.col(static_cast<Eigen::Index>(j)) = U.col(spec.modes[j]);

  Vec w = Vec::Zero(shape.total);
  if (H == 1) {
    // Depth 1 collapses to plain least squares restricted to the modes.
    shape.layer(w, 0) = Us * (Us.transpose() * Syx * SxxInv);
    return w;
  }
  {
    auto W1 = shape.layer(w, 0);
    W1.topRows(static_cast<Eigen::Index>(spec.modes.size())) = Us.transpose() * Syx * SxxInv;
  }
  for (int h = 1; h < H - 1; ++h) shape.layer(w, h) = Mat::Identity(d0, d0);
  {
    auto WH = shape.layer(w, H - 1);
    WH.leftCols(static_cast<Eigen::Index>(spec.modes.size())) = Us;
  }
  return w;
}

}  // namespace stosaddle
