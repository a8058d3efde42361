#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "hetgpt/errors.hpp"
#include "hetgpt/tensor.hpp"

namespace hetgpt {

/// A named tensor with a gradient slot. Non-trainable params enter tapes as
/// plain constants and never receive gradient.
struct Param {
  Tensor value;
  Tensor grad;
  bool trainable = true;
  std::string name;

  Param() = default;
  Param(Tensor v, std::string n, bool train = true)
      : value(std::move(v)), grad(), trainable(train), name(std::move(n)) {
    grad = Tensor::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad.setZero(); }
  long size() const { return value.size(); }
};

inline void zero_grads(const std::vector<Param*>& params) {
  for (Param* p : params) p->zero_grad();
}

inline long param_count(const std::vector<Param*>& params) {
  long n = 0;
  for (const Param* p : params) n += p->size();
  return n;
}

/// Row ranges of a packed edge array: rows [offsets[i], offsets[i+1]) belong
/// to segment i. Offsets are monotone and start at 0.
struct Segments {
  std::vector<int> offsets;
  int count() const { return static_cast<int>(offsets.size()) - 1; }
  int total() const { return offsets.back(); }
};

/// Append-only record of primitive tensor operations. Forward values are
/// computed eagerly; backward() replays the record once in reverse and
/// accumulates vector-Jacobian products into every trainable Param it saw.
///
/// A tape is confined to one thread for the duration of a forward/backward
/// cycle; values read out of it are plain copies.
class Tape {
 public:
  struct Val {
    int id = -1;
  };

  enum class Op {
    Leaf,
    ParamLeaf,
    MatMul,
    Transpose,
    Add,
    Scale,
    AddRowBroadcast,
    ConcatCols,
    ConcatRows,
    SliceRows,
    SliceCols,
    RowSoftmax,
    RowLogSoftmax,
    LeakyRelu,
    Tanh,
    EWiseMul,
    MulScalar,
    ScaleRows,
    ReduceMeanRows,
    ReduceSum,
    L2NormalizeRows,
    FrobeniusNormSq,
    GatherRows,
    SelectCols,
    SegmentSoftmax,
    SegmentSum,
  };

  Val leaf(Tensor v) {
    require_finite(v, "leaf");
    return push(Op::Leaf, -1, -1, std::move(v));
  }

  /// Registers a parameter. Trainable params get gradient write-back in
  /// backward(); frozen ones are recorded as constants.
  Val param(Param& p) {
    Val v = push(Op::ParamLeaf, -1, -1, p.value);
    nodes_[v.id].par = p.trainable ? &p : nullptr;
    return v;
  }

  Val matmul(Val a, Val b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols() != B.rows())
      throw DimensionError("matmul: " + shape_str(A) + " * " + shape_str(B));
    return push(Op::MatMul, a.id, b.id, A * B);
  }

  Val transpose(Val a) { return push(Op::Transpose, a.id, -1, val(a).transpose()); }

  Val add(Val a, Val b) {
    require_same_shape(val(a), val(b), "add");
    return push(Op::Add, a.id, b.id, val(a) + val(b));
  }

  Val scale(Val a, double c) {
    Val v = push(Op::Scale, a.id, -1, val(a) * c);
    nodes_[v.id].scalar = c;
    return v;
  }

  /// A + row vector b broadcast over rows of A.
  Val add_row_broadcast(Val a, Val b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (B.rows() != 1 || B.cols() != A.cols())
      throw DimensionError("add_row_broadcast: " + shape_str(A) + " + " + shape_str(B));
    Tensor out = A;
    out.rowwise() += B.row(0);
    return push(Op::AddRowBroadcast, a.id, b.id, std::move(out));
  }

  Val concat_cols(Val a, Val b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rows() != B.rows())
      throw DimensionError("concat_cols: " + shape_str(A) + " | " + shape_str(B));
    Tensor out(A.rows(), A.cols() + B.cols());
    out << A, B;
    return push(Op::ConcatCols, a.id, b.id, std::move(out));
  }

  Val concat_rows(Val a, Val b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols() != B.cols())
      throw DimensionError("concat_rows: " + shape_str(A) + " / " + shape_str(B));
    Tensor out(A.rows() + B.rows(), A.cols());
    out << A, B;
    return push(Op::ConcatRows, a.id, b.id, std::move(out));
  }

  Val slice_rows(Val a, int start, int len) {
    const Tensor& A = val(a);
    if (start < 0 || len < 0 || start + len > A.rows())
      throw DimensionError("slice_rows: [" + std::to_string(start) + "," +
                           std::to_string(start + len) + ") of " + shape_str(A));
    Val v = push(Op::SliceRows, a.id, -1, A.middleRows(start, len));
    nodes_[v.id].i0 = start;
    nodes_[v.id].i1 = len;
    return v;
  }

  Val slice_cols(Val a, int start, int len) {
    const Tensor& A = val(a);
    if (start < 0 || len < 0 || start + len > A.cols())
      throw DimensionError("slice_cols: [" + std::to_string(start) + "," +
                           std::to_string(start + len) + ") of " + shape_str(A));
    Val v = push(Op::SliceCols, a.id, -1, A.middleCols(start, len));
    nodes_[v.id].i0 = start;
    nodes_[v.id].i1 = len;
    return v;
  }

  /// Softmax over each row, computed with row-max subtraction.
  Val row_softmax(Val a) {
    const Tensor& A = val(a);
    Tensor out(A.rows(), A.cols());
    for (int r = 0; r < A.rows(); ++r) {
      Eigen::Array<double, 1, Eigen::Dynamic> e =
          (A.row(r).array() - A.row(r).maxCoeff()).exp();
      out.row(r) = (e / e.sum()).matrix();
    }
    return push(Op::RowSoftmax, a.id, -1, std::move(out));
  }

  Val row_log_softmax(Val a) {
    const Tensor& A = val(a);
    Tensor out(A.rows(), A.cols());
    for (int r = 0; r < A.rows(); ++r) {
      double m = A.row(r).maxCoeff();
      double lse = m + std::log((A.row(r).array() - m).exp().sum());
      out.row(r) = (A.row(r).array() - lse).matrix();
    }
    return push(Op::RowLogSoftmax, a.id, -1, std::move(out));
  }

  Val leaky_relu(Val a, double slope) {
    const Tensor& A = val(a);
    Tensor out = A.array().max(A.array() * slope).matrix();
    Val v = push(Op::LeakyRelu, a.id, -1, std::move(out));
    nodes_[v.id].scalar = slope;
    return v;
  }

  Val tanh(Val a) {
    return push(Op::Tanh, a.id, -1, val(a).array().tanh().matrix());
  }

  Val elementwise_mul(Val a, Val b) {
    require_same_shape(val(a), val(b), "elementwise_mul");
    return push(Op::EWiseMul, a.id, b.id, val(a).cwiseProduct(val(b)));
  }

  /// X scaled by a 1x1 tape value.
  Val mul_scalar(Val a, Val s) {
    if (!is_scalar(val(s)))
      throw DimensionError("mul_scalar: scale must be 1x1, got " + shape_str(val(s)));
    return push(Op::MulScalar, a.id, s.id, val(a) * val(s)(0, 0));
  }

  /// Row i of V scaled by s(i, 0).
  Val scale_rows(Val v, Val s) {
    const Tensor& V = val(v);
    const Tensor& S = val(s);
    if (S.cols() != 1 || S.rows() != V.rows())
      throw DimensionError("scale_rows: " + shape_str(V) + " by " + shape_str(S));
    Tensor out = (V.array().colwise() * S.col(0).array()).matrix();
    return push(Op::ScaleRows, v.id, s.id, std::move(out));
  }

  /// Column means: r x c -> 1 x c.
  Val reduce_mean_rows(Val a) {
    const Tensor& A = val(a);
    if (A.rows() == 0) throw DimensionError("reduce_mean_rows: empty input");
    Tensor out = A.colwise().mean();
    return push(Op::ReduceMeanRows, a.id, -1, std::move(out));
  }

  Val reduce_sum(Val a) {
    Tensor out(1, 1);
    out(0, 0) = val(a).sum();
    return push(Op::ReduceSum, a.id, -1, std::move(out));
  }

  /// Rows scaled to unit L2 norm. Zero rows are left at zero and flagged on
  /// the node (see had_zero_row()).
  Val l2_normalize_rows(Val a) {
    const Tensor& A = val(a);
    Tensor out(A.rows(), A.cols());
    bool flag = false;
    for (int r = 0; r < A.rows(); ++r) {
      double n = A.row(r).norm();
      if (n == 0.0) {
        out.row(r).setZero();
        flag = true;
      } else {
        out.row(r) = A.row(r) / n;
      }
    }
    Val v = push(Op::L2NormalizeRows, a.id, -1, std::move(out));
    nodes_[v.id].flag = flag;
    return v;
  }

  Val frobenius_norm_sq(Val a) {
    Tensor out(1, 1);
    out(0, 0) = val(a).squaredNorm();
    return push(Op::FrobeniusNormSq, a.id, -1, std::move(out));
  }

  Val gather_rows(Val a, std::vector<int> idx) {
    const Tensor& A = val(a);
    Tensor out(static_cast<int>(idx.size()), A.cols());
    for (std::size_t e = 0; e < idx.size(); ++e) {
      if (idx[e] < 0 || idx[e] >= A.rows())
        throw DimensionError("gather_rows: index " + std::to_string(idx[e]) +
                             " out of " + shape_str(A));
      out.row(static_cast<int>(e)) = A.row(idx[e]);
    }
    Val v = push(Op::GatherRows, a.id, -1, std::move(out));
    nodes_[v.id].idx = std::make_shared<const std::vector<int>>(std::move(idx));
    return v;
  }

  /// One entry per row: out(i, 0) = A(i, idx[i]).
  Val select_cols(Val a, std::vector<int> idx) {
    const Tensor& A = val(a);
    if (static_cast<int>(idx.size()) != A.rows())
      throw DimensionError("select_cols: " + std::to_string(idx.size()) +
                           " indices for " + shape_str(A));
    Tensor out(A.rows(), 1);
    for (int r = 0; r < A.rows(); ++r) {
      if (idx[static_cast<std::size_t>(r)] < 0 ||
          idx[static_cast<std::size_t>(r)] >= A.cols())
        throw DimensionError("select_cols: column index out of range");
      out(r, 0) = A(r, idx[static_cast<std::size_t>(r)]);
    }
    Val v = push(Op::SelectCols, a.id, -1, std::move(out));
    nodes_[v.id].idx = std::make_shared<const std::vector<int>>(std::move(idx));
    return v;
  }

  /// Softmax within each segment of a packed E x 1 score column.
  Val segment_softmax(Val s, std::shared_ptr<const Segments> seg) {
    const Tensor& S = val(s);
    if (S.cols() != 1 || S.rows() != seg->total())
      throw DimensionError("segment_softmax: " + shape_str(S) + " for " +
                           std::to_string(seg->total()) + " packed rows");
    Tensor out(S.rows(), 1);
    for (int i = 0; i < seg->count(); ++i) {
      int lo = seg->offsets[static_cast<std::size_t>(i)];
      int hi = seg->offsets[static_cast<std::size_t>(i) + 1];
      if (lo == hi) continue;
      double m = S.col(0).segment(lo, hi - lo).maxCoeff();
      Eigen::ArrayXd e = (S.col(0).segment(lo, hi - lo).array() - m).exp();
      out.col(0).segment(lo, hi - lo) = (e / e.sum()).matrix();
    }
    Val v = push(Op::SegmentSoftmax, s.id, -1, std::move(out));
    nodes_[v.id].seg = std::move(seg);
    return v;
  }

  /// Sums packed E x d rows into count() x d segment totals. Empty segments
  /// produce zero rows.
  Val segment_sum(Val a, std::shared_ptr<const Segments> seg) {
    const Tensor& A = val(a);
    if (A.rows() != seg->total())
      throw DimensionError("segment_sum: " + shape_str(A) + " for " +
                           std::to_string(seg->total()) + " packed rows");
    Tensor out = Tensor::Zero(seg->count(), A.cols());
    for (int i = 0; i < seg->count(); ++i)
      for (int e = seg->offsets[static_cast<std::size_t>(i)];
           e < seg->offsets[static_cast<std::size_t>(i) + 1]; ++e)
        out.row(i) += A.row(e);
    Val v = push(Op::SegmentSum, a.id, -1, std::move(out));
    nodes_[v.id].seg = std::move(seg);
    return v;
  }

  const Tensor& value(Val v) const { return val(v); }

  bool had_zero_row(Val v) const { return nodes_[static_cast<std::size_t>(v.id)].flag; }

  /// Reverse pass from a scalar output. Gradients accumulate into the grad
  /// slot of every trainable Param recorded on this tape.
  void backward(Val out) {
    const Tensor& o = val(out);
    if (!is_scalar(o))
      throw DimensionError("backward: output must be 1x1, got " + shape_str(o));
    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> live(nodes_.size(), false);
    auto g = [&](int id) -> Tensor& {
      if (!live[static_cast<std::size_t>(id)]) {
        const Tensor& v = nodes_[static_cast<std::size_t>(id)].value;
        grads[static_cast<std::size_t>(id)] = Tensor::Zero(v.rows(), v.cols());
        live[static_cast<std::size_t>(id)] = true;
      }
      return grads[static_cast<std::size_t>(id)];
    };
    g(out.id)(0, 0) = 1.0;

    for (int id = out.id; id >= 0; --id) {
      if (!live[static_cast<std::size_t>(id)]) continue;
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      const Tensor& gy = grads[static_cast<std::size_t>(id)];
      switch (n.op) {
        case Op::Leaf:
          break;
        case Op::ParamLeaf:
          if (n.par) n.par->grad += gy;
          break;
        case Op::MatMul:
          g(n.a) += gy * nodes_[static_cast<std::size_t>(n.b)].value.transpose();
          g(n.b) += nodes_[static_cast<std::size_t>(n.a)].value.transpose() * gy;
          break;
        case Op::Transpose:
          g(n.a) += gy.transpose();
          break;
        case Op::Add:
          g(n.a) += gy;
          g(n.b) += gy;
          break;
        case Op::Scale:
          g(n.a) += gy * n.scalar;
          break;
        case Op::AddRowBroadcast:
          g(n.a) += gy;
          g(n.b) += gy.colwise().sum();
          break;
        case Op::ConcatCols: {
          int ca = static_cast<int>(nodes_[static_cast<std::size_t>(n.a)].value.cols());
          g(n.a) += gy.leftCols(ca);
          g(n.b) += gy.rightCols(gy.cols() - ca);
          break;
        }
        case Op::ConcatRows: {
          int ra = static_cast<int>(nodes_[static_cast<std::size_t>(n.a)].value.rows());
          g(n.a) += gy.topRows(ra);
          g(n.b) += gy.bottomRows(gy.rows() - ra);
          break;
        }
        case Op::SliceRows:
          g(n.a).middleRows(n.i0, n.i1) += gy;
          break;
        case Op::SliceCols:
          g(n.a).middleCols(n.i0, n.i1) += gy;
          break;
        case Op::RowSoftmax: {
          const Tensor& y = n.value;
          Tensor& ga = g(n.a);
          for (int r = 0; r < y.rows(); ++r) {
            double dot = y.row(r).dot(gy.row(r));
            ga.row(r) += (y.row(r).array() * (gy.row(r).array() - dot)).matrix();
          }
          break;
        }
        case Op::RowLogSoftmax: {
          const Tensor& y = n.value;
          Tensor& ga = g(n.a);
          for (int r = 0; r < y.rows(); ++r) {
            double s = gy.row(r).sum();
            ga.row(r) += gy.row(r) - s * y.row(r).array().exp().matrix();
          }
          break;
        }
        case Op::LeakyRelu: {
          const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
          g(n.a).array() +=
              gy.array() * ((x.array() > 0.0).cast<double>() * (1.0 - n.scalar) + n.scalar);
          break;
        }
        case Op::Tanh:
          g(n.a) += (gy.array() * (1.0 - n.value.array().square())).matrix();
          break;
        case Op::EWiseMul:
          g(n.a) += gy.cwiseProduct(nodes_[static_cast<std::size_t>(n.b)].value);
          g(n.b) += gy.cwiseProduct(nodes_[static_cast<std::size_t>(n.a)].value);
          break;
        case Op::MulScalar: {
          double s = nodes_[static_cast<std::size_t>(n.b)].value(0, 0);
          g(n.a) += gy * s;
          g(n.b)(0, 0) += gy.cwiseProduct(nodes_[static_cast<std::size_t>(n.a)].value).sum();
          break;
        }
        case Op::ScaleRows: {
          const Tensor& V = nodes_[static_cast<std::size_t>(n.a)].value;
          const Tensor& S = nodes_[static_cast<std::size_t>(n.b)].value;
          g(n.a) += (gy.array().colwise() * S.col(0).array()).matrix();
          g(n.b).col(0) += gy.cwiseProduct(V).rowwise().sum();
          break;
        }
        case Op::ReduceMeanRows: {
          const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
          Tensor& ga = g(n.a);
          ga.rowwise() += (gy.row(0) / static_cast<double>(x.rows()));
          break;
        }
        case Op::ReduceSum:
          g(n.a).array() += gy(0, 0);
          break;
        case Op::L2NormalizeRows: {
          const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
          const Tensor& y = n.value;
          Tensor& ga = g(n.a);
          for (int r = 0; r < x.rows(); ++r) {
            double nrm = x.row(r).norm();
            if (nrm == 0.0) continue;
            double dot = y.row(r).dot(gy.row(r));
            ga.row(r) += (gy.row(r) - dot * y.row(r)) / nrm;
          }
          break;
        }
        case Op::FrobeniusNormSq:
          g(n.a) += 2.0 * gy(0, 0) * nodes_[static_cast<std::size_t>(n.a)].value;
          break;
        case Op::GatherRows: {
          Tensor& ga = g(n.a);
          const auto& idx = *n.idx;
          for (std::size_t e = 0; e < idx.size(); ++e)
            ga.row(idx[e]) += gy.row(static_cast<int>(e));
          break;
        }
        case Op::SelectCols: {
          Tensor& ga = g(n.a);
          const auto& idx = *n.idx;
          for (int r = 0; r < gy.rows(); ++r)
            ga(r, idx[static_cast<std::size_t>(r)]) += gy(r, 0);
          break;
        }
        case Op::SegmentSoftmax: {
          const Tensor& y = n.value;
          Tensor& ga = g(n.a);
          for (int i = 0; i < n.seg->count(); ++i) {
            int lo = n.seg->offsets[static_cast<std::size_t>(i)];
            int hi = n.seg->offsets[static_cast<std::size_t>(i) + 1];
            if (lo == hi) continue;
            double dot = y.col(0).segment(lo, hi - lo).dot(gy.col(0).segment(lo, hi - lo));
            ga.col(0).segment(lo, hi - lo) +=
                (y.col(0).segment(lo, hi - lo).array() *
                 (gy.col(0).segment(lo, hi - lo).array() - dot))
                    .matrix();
          }
          break;
        }
        case Op::SegmentSum: {
          Tensor& ga = g(n.a);
          for (int i = 0; i < n.seg->count(); ++i)
            for (int e = n.seg->offsets[static_cast<std::size_t>(i)];
                 e < n.seg->offsets[static_cast<std::size_t>(i) + 1]; ++e)
              ga.row(e) += gy.row(i);
          break;
        }
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

  void reset() { nodes_.clear(); }

  /// Text listing of the recorded operations, for inspection.
  void dump(std::ostream& os) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      os << i << "\t" << op_name(n.op) << "\t" << shape_str(n.value);
      if (n.a >= 0) os << "\tin=" << n.a;
      if (n.b >= 0) os << "," << n.b;
      if (n.op == Op::ParamLeaf && n.par) os << "\tparam=" << n.par->name;
      os << "\n";
    }
  }

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double scalar = 0.0;
    int i0 = 0, i1 = 0;
    std::shared_ptr<const std::vector<int>> idx;
    std::shared_ptr<const Segments> seg;
    Param* par = nullptr;
    Tensor value;
    bool flag = false;
  };

  const Tensor& val(Val v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw DimensionError("tape: invalid value handle");
    return nodes_[static_cast<std::size_t>(v.id)].value;
  }

  Val push(Op op, int a, int b, Tensor value) {
    require_finite(value, op_name(op));
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Val{static_cast<int>(nodes_.size()) - 1};
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::Leaf: return "leaf";
      case Op::ParamLeaf: return "param";
      case Op::MatMul: return "matmul";
      case Op::Transpose: return "transpose";
      case Op::Add: return "add";
      case Op::Scale: return "scale";
      case Op::AddRowBroadcast: return "add_row_broadcast";
      case Op::ConcatCols: return "concat_cols";
      case Op::ConcatRows: return "concat_rows";
      case Op::SliceRows: return "slice_rows";
      case Op::SliceCols: return "slice_cols";
      case Op::RowSoftmax: return "row_softmax";
      case Op::RowLogSoftmax: return "row_log_softmax";
      case Op::LeakyRelu: return "leaky_relu";
      case Op::Tanh: return "tanh";
      case Op::EWiseMul: return "elementwise_mul";
      case Op::MulScalar: return "mul_scalar";
      case Op::ScaleRows: return "scale_rows";
      case Op::ReduceMeanRows: return "reduce_mean_rows";
      case Op::ReduceSum: return "reduce_sum";
      case Op::L2NormalizeRows: return "l2_normalize_rows";
      case Op::FrobeniusNormSq: return "frobenius_norm_sq";
      case Op::GatherRows: return "gather_rows";
      case Op::SelectCols: return "select_cols";
      case Op::SegmentSoftmax: return "segment_softmax";
      case Op::SegmentSum: return "segment_sum";
    }
    return "?";
  }

  std::vector<Node> nodes_;
};

/// Default negative slope for every LeakyReLU in the model.
inline constexpr double kLeakySlope = 0.01;

}  // namespace hetgpt
