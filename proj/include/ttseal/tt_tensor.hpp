#pragma once

// Tensor-train (TT) format: cores, TT-SVD, reconstruction and the TT linear
// map used by TT layers.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ttseal/error.hpp"

namespace ttseal {

inline constexpr std::size_t kUnboundedRank = std::numeric_limits<std::size_t>::max();

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

inline std::size_t product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

/// Identifies one TT-core globally: the owning layer index and the position of
/// the core inside that layer's train.
struct CoreId {
  std::uint32_t layer = 0;
  std::uint32_t core = 0;

  auto operator<=>(const CoreId&) const = default;

  std::string str() const { return std::to_string(layer) + ":" + std::to_string(core); }

  static CoreId parse(std::string_view text) {
    const auto colon = text.find(':');
    require(colon != std::string_view::npos, ErrorKind::format,
            "bad core id '" + std::string(text) + "'");
    CoreId id;
    auto parse_part = [&](std::string_view part, std::uint32_t& out) {
      auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
      require(ec == std::errc{} && ptr == part.data() + part.size(), ErrorKind::format,
              "bad core id '" + std::string(text) + "'");
    };
    parse_part(text.substr(0, colon), id.layer);
    parse_part(text.substr(colon + 1), id.core);
    return id;
  }
};

/// One core G_k of shape left_rank x mode_size x right_rank, stored row-major
/// (left rank slowest).
struct TTCore {
  CoreId id;
  std::size_t left_rank = 1;
  std::size_t mode_size = 1;
  std::size_t right_rank = 1;
  std::vector<double> data = std::vector<double>(1, 0.0);

  TTCore() = default;
  TTCore(CoreId core_id, std::size_t left, std::size_t mode, std::size_t right)
      : id(core_id), left_rank(left), mode_size(mode), right_rank(right),
        data(left * mode * right, 0.0) {
    validate();
  }

  double& at(std::size_t a, std::size_t j, std::size_t b) {
    return data[(a * mode_size + j) * right_rank + b];
  }
  double at(std::size_t a, std::size_t j, std::size_t b) const {
    return data[(a * mode_size + j) * right_rank + b];
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
  }

  void validate() const {
    require(left_rank >= 1 && mode_size >= 1 && right_rank >= 1, ErrorKind::degenerate,
            "core " + id.str() + " has a zero dimension");
    require(data.size() == left_rank * mode_size * right_rank, ErrorKind::shape,
            "core " + id.str() + " data size does not match its dimensions");
  }
};

inline std::size_t core_size(const TTCore& core) {
  return core.left_rank * core.mode_size * core.right_rank;
}

/// Dense row-major d-way array.
struct DenseTensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  DenseTensor() = default;
  explicit DenseTensor(std::vector<std::size_t> dims)
      : shape(std::move(dims)), data(product(shape), 0.0) {}
  DenseTensor(std::vector<std::size_t> dims, std::vector<double> values)
      : shape(std::move(dims)), data(std::move(values)) {
    require(data.size() == product(shape), ErrorKind::shape,
            "dense tensor data does not match its shape");
  }

  std::size_t size() const { return data.size(); }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
  }
};

inline double relative_error(std::span<const double> got, std::span<const double> want) {
  require(got.size() == want.size(), ErrorKind::shape, "relative_error: size mismatch");
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    diff += (got[i] - want[i]) * (got[i] - want[i]);
    ref += want[i] * want[i];
  }
  if (ref == 0.0) return std::sqrt(diff);
  return std::sqrt(diff / ref);
}

class TTTensor {
 public:
  TTTensor() = default;

  explicit TTTensor(std::vector<TTCore> cores) : cores_(std::move(cores)) { validate(); }

  const std::vector<TTCore>& cores() const { return cores_; }
  const TTCore& core(std::size_t k) const { return cores_.at(k); }

  // Shape-preserving mutable access to one core's values.
  std::span<double> core_data(std::size_t k) { return cores_.at(k).data; }

  std::size_t order() const { return cores_.size(); }

  std::vector<std::size_t> mode_sizes() const {
    std::vector<std::size_t> out;
    for (const auto& c : cores_) out.push_back(c.mode_size);
    return out;
  }

  /// r_0 .. r_d
  std::vector<std::size_t> ranks() const {
    std::vector<std::size_t> out;
    if (cores_.empty()) return out;
    out.push_back(cores_.front().left_rank);
    for (const auto& c : cores_) out.push_back(c.right_rank);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& c : cores_) n += core_size(c);
    return n;
  }

  void set_layer(std::uint32_t layer) {
    for (std::size_t k = 0; k < cores_.size(); ++k)
      cores_[k].id = CoreId{layer, static_cast<std::uint32_t>(k)};
  }

  void validate() const {
    require(!cores_.empty(), ErrorKind::shape, "TT tensor without cores");
    for (const auto& c : cores_) c.validate();
    require(cores_.front().left_rank == 1 && cores_.back().right_rank == 1, ErrorKind::shape,
            "TT boundary ranks must be 1");
    for (std::size_t k = 0; k + 1 < cores_.size(); ++k)
      require(cores_[k].right_rank == cores_[k + 1].left_rank, ErrorKind::shape,
              "TT rank chain broken between cores " + std::to_string(k) + " and " +
                  std::to_string(k + 1));
  }

 private:
  std::vector<TTCore> cores_;
};

/// How a TT tensor maps onto the weight it stands for. Every TT mode k
/// factors as (row_factors[k], col_factors[k]) with mode index
/// j_k = o_k * col_factors[k] + i_k. The matricized weight has
/// rows = prod(row_factors), cols = prod(col_factors), with the first mode
/// most significant on both sides.
///
/// A TT-matrix (TT-linear layer) uses matrix(); a conv kernel C_out x C_in x
/// K_h x K_w decomposed as a generic 4-mode tensor uses tensor(shape, 1),
/// which matricizes it to C_out x (C_in K_h K_w).
struct ShapeDescriptor {
  std::vector<std::size_t> original_shape;
  std::vector<std::size_t> row_factors;
  std::vector<std::size_t> col_factors;

  static ShapeDescriptor matrix(std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
    ShapeDescriptor s;
    s.original_shape = {product(rows), product(cols)};
    s.row_factors = std::move(rows);
    s.col_factors = std::move(cols);
    s.validate();
    return s;
  }

  static ShapeDescriptor tensor(std::vector<std::size_t> shape, std::size_t row_axes = 1) {
    ShapeDescriptor s;
    s.original_shape = shape;
    for (std::size_t k = 0; k < shape.size(); ++k) {
      s.row_factors.push_back(k < row_axes ? shape[k] : 1);
      s.col_factors.push_back(k < row_axes ? 1 : shape[k]);
    }
    s.validate();
    return s;
  }

  std::size_t order() const { return row_factors.size(); }
  std::size_t rows() const { return product(row_factors); }
  std::size_t cols() const { return product(col_factors); }

  std::vector<std::size_t> mode_sizes() const {
    std::vector<std::size_t> out(order());
    for (std::size_t k = 0; k < order(); ++k) out[k] = row_factors[k] * col_factors[k];
    return out;
  }

  void validate() const {
    require(row_factors.size() == col_factors.size() && !row_factors.empty(), ErrorKind::shape,
            "shape descriptor factor lists differ in length");
    for (std::size_t k = 0; k < order(); ++k)
      require(row_factors[k] >= 1 && col_factors[k] >= 1, ErrorKind::degenerate,
              "shape descriptor has a zero factor");
    for (auto d : original_shape)
      require(d >= 1, ErrorKind::degenerate, "shape descriptor has a zero axis");
    const auto modes = mode_sizes();
    require(product(modes) == product(original_shape), ErrorKind::shape,
            "product of mode sizes differs from product of the original shape");
  }

  /// For each tensor flat index (mode order), the matching row-major matrix
  /// flat index.
  std::vector<std::size_t> tensor_to_matrix_index() const {
    const auto modes = mode_sizes();
    const std::size_t n = product(modes);
    const std::size_t ncols = cols();
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(order(), 0);
    for (std::size_t t = 0; t < n; ++t) {
      std::size_t row = 0, col = 0;
      for (std::size_t k = 0; k < order(); ++k) {
        row = row * row_factors[k] + idx[k] / col_factors[k];
        col = col * col_factors[k] + idx[k] % col_factors[k];
      }
      map[t] = row * ncols + col;
      for (std::size_t k = order(); k-- > 0;) {
        if (++idx[k] < modes[k]) break;
        idx[k] = 0;
      }
    }
    return map;
  }

  std::vector<double> matricize(const DenseTensor& t) const {
    require(t.shape == mode_sizes(), ErrorKind::shape, "matricize: tensor shape mismatch");
    const auto map = tensor_to_matrix_index();
    std::vector<double> m(t.size());
    for (std::size_t i = 0; i < map.size(); ++i) m[map[i]] = t.data[i];
    return m;
  }

  DenseTensor tensorize(std::span<const double> matrix) const {
    require(matrix.size() == rows() * cols(), ErrorKind::shape, "tensorize: matrix size mismatch");
    const auto map = tensor_to_matrix_index();
    DenseTensor t(mode_sizes());
    for (std::size_t i = 0; i < map.size(); ++i) t.data[i] = matrix[map[i]];
    return t;
  }
};

/// Left-to-right TT-SVD: reshape, truncated SVD, carry S V^T to the next
/// unfolding. Singular directions are kept in SVD output order up to the cap;
/// numerically zero directions (below 1e-12 of the leading value) are dropped.
inline TTTensor tt_svd(const DenseTensor& tensor, std::span<const std::size_t> max_ranks,
                       std::uint32_t layer = 0) {
  const std::size_t d = tensor.shape.size();
  require(d >= 2, ErrorKind::shape, "tt_svd needs at least 2 modes");
  require(max_ranks.size() == d - 1, ErrorKind::shape,
          "tt_svd: expected " + std::to_string(d - 1) + " rank caps, got " +
              std::to_string(max_ranks.size()));
  for (auto n : tensor.shape) require(n >= 1, ErrorKind::degenerate, "tt_svd: zero mode size");
  for (auto r : max_ranks) require(r >= 1, ErrorKind::degenerate, "tt_svd: rank cap must be >= 1");
  require(tensor.data.size() == product(tensor.shape), ErrorKind::shape,
          "tt_svd: data does not match shape");

  std::vector<TTCore> cores;
  std::vector<double> carry = tensor.data;
  std::size_t left = 1;
  std::size_t rest = tensor.data.size();
  for (std::size_t k = 0; k + 1 < d; ++k) {
    const std::size_t n = tensor.shape[k];
    rest /= n;
    const std::size_t rows = left * n;
    ConstMatrixMap unfolding(carry.data(), static_cast<Eigen::Index>(rows),
                             static_cast<Eigen::Index>(rest));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(unfolding, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sigma = svd.singularValues();
    std::size_t rank = 1;
    const double floor = sigma.size() > 0 ? sigma(0) * 1e-12 : 0.0;
    for (Eigen::Index i = 1; i < sigma.size(); ++i)
      if (sigma(i) > floor) rank = static_cast<std::size_t>(i) + 1;
    rank = std::min({rank, max_ranks[k], rows, rest});

    TTCore core(CoreId{layer, static_cast<std::uint32_t>(k)}, left, n, rank);
    MatrixMap(core.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rank)) =
        svd.matrixU().leftCols(static_cast<Eigen::Index>(rank));
    cores.push_back(std::move(core));

    RowMajorMatrix next = sigma.head(static_cast<Eigen::Index>(rank)).asDiagonal() *
                          svd.matrixV().leftCols(static_cast<Eigen::Index>(rank)).transpose();
    carry.assign(next.data(), next.data() + next.size());
    left = rank;
  }
  TTCore last(CoreId{layer, static_cast<std::uint32_t>(d - 1)}, left, tensor.shape[d - 1], 1);
  last.data = carry;
  cores.push_back(std::move(last));
  return TTTensor(std::move(cores));
}

inline TTTensor tt_svd(const DenseTensor& tensor, std::initializer_list<std::size_t> max_ranks,
                       std::uint32_t layer = 0) {
  return tt_svd(tensor, std::span<const std::size_t>(max_ranks.begin(), max_ranks.size()), layer);
}

inline DenseTensor reconstruct(const TTTensor& tt) {
  tt.validate();
  RowMajorMatrix acc = RowMajorMatrix::Ones(1, 1);
  for (const auto& core : tt.cores()) {
    ConstMatrixMap g(core.data.data(), static_cast<Eigen::Index>(core.left_rank),
                     static_cast<Eigen::Index>(core.mode_size * core.right_rank));
    RowMajorMatrix next = acc * g;
    acc = MatrixMap(next.data(), next.size() / static_cast<Eigen::Index>(core.right_rank),
                    static_cast<Eigen::Index>(core.right_rank));
  }
  return DenseTensor(tt.mode_sizes(), std::vector<double>(acc.data(), acc.data() + acc.size()));
}

namespace detail {

inline void check_layout(const TTTensor& tt, const ShapeDescriptor& shape) {
  require(tt.order() == shape.order(), ErrorKind::shape,
          "TT order differs from shape descriptor order");
  const auto modes = shape.mode_sizes();
  for (std::size_t k = 0; k < modes.size(); ++k)
    require(tt.core(k).mode_size == modes[k], ErrorKind::shape,
            "TT mode size differs from shape descriptor at mode " + std::to_string(k));
}

// Core-by-core contraction of the TT matrix (or its transpose) with x.
// State layout before step k: P x r_{k-1} x n_k x Q, with P the product of
// already produced output factors and n_k Q the remaining input factors.
inline std::vector<double> tt_matvec(const TTTensor& tt, const ShapeDescriptor& shape,
                                     std::span<const double> x, bool transpose) {
  const auto& out_f = transpose ? shape.col_factors : shape.row_factors;
  const auto& in_f = transpose ? shape.row_factors : shape.col_factors;
  const std::size_t in_size = product(in_f);
  require(x.size() == in_size, ErrorKind::shape,
          "tt_apply: input length " + std::to_string(x.size()) + ", expected " +
              std::to_string(in_size));

  std::vector<double> state(x.begin(), x.end());
  std::vector<double> next;
  std::size_t outer = 1;
  std::size_t remaining = in_size;
  for (std::size_t k = 0; k < tt.order(); ++k) {
    const auto& core = tt.core(k);
    const std::size_t r_in = core.left_rank, r_out = core.right_rank;
    const std::size_t n = in_f[k], m = out_f[k];
    remaining /= n;
    const std::size_t q_size = remaining;
    const std::size_t col_f = shape.col_factors[k];
    next.assign(outer * m * r_out * q_size, 0.0);
    for (std::size_t p = 0; p < outer; ++p)
      for (std::size_t a = 0; a < r_in; ++a)
        for (std::size_t i = 0; i < n; ++i) {
          const double* src = &state[((p * r_in + a) * n + i) * q_size];
          for (std::size_t o = 0; o < m; ++o) {
            const std::size_t j = transpose ? i * col_f + o : o * col_f + i;
            const double* g = &core.data[(a * core.mode_size + j) * r_out];
            for (std::size_t b = 0; b < r_out; ++b) {
              const double coeff = g[b];
              if (coeff == 0.0) continue;
              double* dst = &next[((p * m + o) * r_out + b) * q_size];
              for (std::size_t q = 0; q < q_size; ++q) dst[q] += coeff * src[q];
            }
          }
        }
    state.swap(next);
    outer *= m;
  }
  return state;
}

}  // namespace detail

/// y = W x where W is the matricized TT weight; never forms W.
inline std::vector<double> tt_apply(const TTTensor& tt, const ShapeDescriptor& shape,
                                    std::span<const double> input) {
  detail::check_layout(tt, shape);
  return detail::tt_matvec(tt, shape, input, false);
}

/// y = W^T x
inline std::vector<double> tt_apply_transposed(const TTTensor& tt, const ShapeDescriptor& shape,
                                               std::span<const double> input) {
  detail::check_layout(tt, shape);
  return detail::tt_matvec(tt, shape, input, true);
}

/// Dense matricized weight (rows x cols, row-major).
inline std::vector<double> dense_matrix(const TTTensor& tt, const ShapeDescriptor& shape) {
  detail::check_layout(tt, shape);
  return shape.matricize(reconstruct(tt));
}

/// Gradients of a scalar with respect to every core, given its gradient with
/// respect to the matricized weight. For core k:
///   dG_k[a, j, b] = sum_{p,q} Left_k[p, a] dW[p, j, q] Right_k[b, q]
/// where Left_k / Right_k are the partial chains of the other cores.
inline std::vector<std::vector<double>> tt_core_gradients(const TTTensor& tt,
                                                          const ShapeDescriptor& shape,
                                                          std::span<const double> weight_grad) {
  detail::check_layout(tt, shape);
  const DenseTensor dt = shape.tensorize(weight_grad);
  const std::size_t d = tt.order();
  const auto modes = shape.mode_sizes();

  // lefts[k]: P_k x r_{k-1}
  std::vector<RowMajorMatrix> lefts(d);
  lefts[0] = RowMajorMatrix::Ones(1, 1);
  for (std::size_t k = 1; k < d; ++k) {
    const auto& c = tt.core(k - 1);
    ConstMatrixMap g(c.data.data(), static_cast<Eigen::Index>(c.left_rank),
                     static_cast<Eigen::Index>(c.mode_size * c.right_rank));
    RowMajorMatrix prod = lefts[k - 1] * g;
    lefts[k] = MatrixMap(prod.data(), prod.size() / static_cast<Eigen::Index>(c.right_rank),
                         static_cast<Eigen::Index>(c.right_rank));
  }
  // rights[k]: r_k x Q_k
  std::vector<RowMajorMatrix> rights(d);
  rights[d - 1] = RowMajorMatrix::Ones(1, 1);
  for (std::size_t k = d - 1; k-- > 0;) {
    const auto& c = tt.core(k + 1);
    ConstMatrixMap g(c.data.data(), static_cast<Eigen::Index>(c.left_rank * c.mode_size),
                     static_cast<Eigen::Index>(c.right_rank));
    RowMajorMatrix prod = g * rights[k + 1];  // (r_k n) x Q
    rights[k] = MatrixMap(prod.data(), static_cast<Eigen::Index>(c.left_rank),
                          prod.size() / static_cast<Eigen::Index>(c.left_rank));
  }

  std::vector<std::vector<double>> grads(d);
  for (std::size_t k = 0; k < d; ++k) {
    const auto& c = tt.core(k);
    const auto p_size = lefts[k].rows();
    const auto q_size = rights[k].cols();
    const auto n = static_cast<Eigen::Index>(modes[k]);
    ConstMatrixMap dw(dt.data.data(), p_size, n * q_size);
    RowMajorMatrix partial = lefts[k].transpose() * dw;  // r_{k-1} x (n Q)
    ConstMatrixMap partial_view(partial.data(), static_cast<Eigen::Index>(c.left_rank) * n, q_size);
    RowMajorMatrix g = partial_view * rights[k].transpose();  // (r_{k-1} n) x r_k
    grads[k].assign(g.data(), g.data() + g.size());
  }
  return grads;
}

}  // namespace ttseal
