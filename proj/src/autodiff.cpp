#include "infokoop/autodiff.hpp"

#include <cmath>

#include "infokoop/errors.hpp"

namespace infokoop::ad {

const Eigen::MatrixXd& Var::value() const { return tape_->value(id_); }
const Eigen::MatrixXd& Var::grad() const { return tape_->grad(id_); }

Var Tape::variable(Eigen::MatrixXd value) {
  nodes_.push_back({std::move(value), {}, nullptr, true});
  return {this, int(nodes_.size()) - 1};
}

Var Tape::constant(Eigen::MatrixXd value) {
  nodes_.push_back({std::move(value), {}, nullptr, false});
  return {this, int(nodes_.size()) - 1};
}

Var Tape::record(Eigen::MatrixXd value, std::vector<int> inputs, Backward backward) {
  bool needs = false;
  for (int id : inputs) needs = needs || nodes_[id].needs_grad;
  nodes_.push_back({std::move(value), {}, needs ? std::move(backward) : nullptr, needs});
  return {this, int(nodes_.size()) - 1};
}

Eigen::MatrixXd& Tape::grad_mut(int id) { return nodes_[id].grad; }

void Tape::accumulate(int id, const Eigen::MatrixXd& g) {
  Node& node = nodes_[id];
  if (!node.needs_grad) return;
  node.grad += g;
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw InputError("backward: variable belongs to another tape");
  if (root.rows() != 1 || root.cols() != 1) throw InputError("backward: root must be scalar");
  for (Node& node : nodes_)
    node.grad = node.needs_grad ? Eigen::MatrixXd::Zero(node.value.rows(), node.value.cols())
                                : Eigen::MatrixXd();
  if (!nodes_[root.id()].needs_grad) return;
  nodes_[root.id()].grad(0, 0) = 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.backward && node.grad.size() > 0) node.backward(*this, id);
  }
}

namespace {

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.tape() != b.tape()) throw InputError(std::string(op) + ": operands on different tapes");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InputError(std::string(op) + ": shape mismatch");
}

void row_shape(const Var& a, const Var& row, const char* op) {
  if (a.tape() != row.tape()) throw InputError(std::string(op) + ": operands on different tapes");
  if (row.rows() != 1 || row.cols() != a.cols())
    throw InputError(std::string(op) + ": row operand has wrong shape");
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var operator-(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

Var operator*(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw InputError("matmul: operands on different tapes");
  if (a.cols() != b.rows()) throw InputError("matmul: inner dimensions differ");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Eigen::MatrixXd& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var operator*(double s, const Var& a) {
  const int ia = a.id();
  return a.tape()->record(s * a.value(), {ia},
                          [ia, s](Tape& t, int self) { t.accumulate(ia, s * t.grad(self)); });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var transpose(const Var& a) {
  const int ia = a.id();
  return a.tape()->record(a.value().transpose(), {ia}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).transpose());
  });
}

Var hadamard(const Var& a, const Var& b) {
  same_shape(a, b, "hadamard");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), {ia, ib},
                          [ia, ib](Tape& t, int self) {
                            const Eigen::MatrixXd& g = t.grad(self);
                            t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                            t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                          });
}

Var add_row(const Var& a, const Var& row) {
  row_shape(a, row, "add_row");
  const int ia = a.id(), ir = row.id();
  return a.tape()->record(a.value().rowwise() + row.value().row(0), {ia, ir},
                          [ia, ir](Tape& t, int self) {
                            t.accumulate(ia, t.grad(self));
                            t.accumulate(ir, t.grad(self).colwise().sum());
                          });
}

Var sub_row(const Var& a, const Var& row) {
  row_shape(a, row, "sub_row");
  const int ia = a.id(), ir = row.id();
  return a.tape()->record(a.value().rowwise() - row.value().row(0), {ia, ir},
                          [ia, ir](Tape& t, int self) {
                            t.accumulate(ia, t.grad(self));
                            t.accumulate(ir, -t.grad(self).colwise().sum());
                          });
}

Var mul_row(const Var& a, const Var& row) {
  row_shape(a, row, "mul_row");
  const int ia = a.id(), ir = row.id();
  Eigen::MatrixXd out = a.value().array().rowwise() * row.value().row(0).array();
  return a.tape()->record(std::move(out), {ia, ir}, [ia, ir](Tape& t, int self) {
    const Eigen::MatrixXd& g = t.grad(self);
    if (t.needs_grad(ia))
      t.accumulate(ia, (g.array().rowwise() * t.value(ir).row(0).array()).matrix());
    if (t.needs_grad(ir)) t.accumulate(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
  });
}

Var relu(const Var& a) {
  const int ia = a.id();
  return a.tape()->record(a.value().cwiseMax(0.0), {ia}, [ia](Tape& t, int self) {
    t.accumulate(ia, (t.value(ia).array() > 0.0).select(t.grad(self), 0.0));
  });
}

Var exp(const Var& a) {
  const int ia = a.id();
  return a.tape()->record(a.value().array().exp().matrix(), {ia}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var sqrt(const Var& a) {
  const int ia = a.id();
  return a.tape()->record(a.value().cwiseSqrt(), {ia}, [ia](Tape& t, int self) {
    t.accumulate(ia, (0.5 * t.grad(self).array() / t.value(self).array()).matrix());
  });
}

Var log(const Var& a) {
  const int ia = a.id();
  return a.tape()->record(a.value().array().log().matrix(), {ia}, [ia](Tape& t, int self) {
    t.accumulate(ia, (t.grad(self).array() / t.value(ia).array()).matrix());
  });
}

Var square(const Var& a) {
  const int ia = a.id();
  return a.tape()->record(a.value().array().square().matrix(), {ia}, [ia](Tape& t, int self) {
    t.accumulate(ia, 2.0 * t.grad(self).cwiseProduct(t.value(ia)));
  });
}

Var reciprocal(const Var& a) {
  const int ia = a.id();
  return a.tape()->record(a.value().cwiseInverse(), {ia}, [ia](Tape& t, int self) {
    t.accumulate(ia, -(t.grad(self).array() * t.value(self).array().square()).matrix());
  });
}

Var clamp_min(const Var& a, double floor, int* clipped) {
  const int ia = a.id();
  if (clipped) *clipped = int((a.value().array() < floor).count());
  return a.tape()->record(a.value().cwiseMax(floor), {ia}, [ia, floor](Tape& t, int self) {
    t.accumulate(ia, (t.value(ia).array() >= floor).select(t.grad(self), 0.0));
  });
}

Var add_scalar(const Var& a, double s) {
  const int ia = a.id();
  return a.tape()->record((a.value().array() + s).matrix(), {ia},
                          [ia](Tape& t, int self) { t.accumulate(ia, t.grad(self)); });
}

Var sum(const Var& a) {
  const int ia = a.id();
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Eigen::MatrixXd& v = t.value(ia);
    t.accumulate(ia, Eigen::MatrixXd::Constant(v.rows(), v.cols(), t.grad(self)(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw InputError("mean of an empty matrix");
  return (1.0 / double(a.value().size())) * sum(a);
}

Var column_mean(const Var& a) {
  const int ia = a.id();
  const double n = double(a.rows());
  return a.tape()->record(a.value().colwise().mean(), {ia}, [ia, n](Tape& t, int self) {
    const Eigen::MatrixXd& v = t.value(ia);
    t.accumulate(ia, (t.grad(self) / n).replicate(v.rows(), 1));
  });
}

Var row_sum(const Var& a) {
  const int ia = a.id();
  return a.tape()->record(a.value().rowwise().sum(), {ia}, [ia](Tape& t, int self) {
    const Eigen::MatrixXd& v = t.value(ia);
    t.accumulate(ia, t.grad(self).replicate(1, v.cols()));
  });
}

Var rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw InputError("rows: slice out of range");
  const int ia = a.id();
  return a.tape()->record(a.value().middleRows(start, count), {ia},
                          [ia, start, count](Tape& t, int self) {
                            const Eigen::MatrixXd& v = t.value(ia);
                            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(v.rows(), v.cols());
                            g.middleRows(start, count) = t.grad(self);
                            t.accumulate(ia, g);
                          });
}

Var row_logsumexp(const Var& a) {
  const int ia = a.id();
  const Eigen::MatrixXd& v = a.value();
  Eigen::MatrixXd out(v.rows(), 1);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    out(r, 0) = m + std::log((v.row(r).array() - m).exp().sum());
  }
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Eigen::MatrixXd& x = t.value(ia);
    const Eigen::MatrixXd& lse = t.value(self);
    const Eigen::MatrixXd softmax = (x.colwise() - lse.col(0)).array().exp().matrix();
    t.accumulate(ia, (softmax.array().colwise() * t.grad(self).col(0).array()).matrix());
  });
}

Var weighted_sum(const Var& a, const Eigen::MatrixXd& w) {
  if (w.rows() != a.rows() || w.cols() != a.cols())
    throw InputError("weighted_sum: weight shape mismatch");
  const int ia = a.id();
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = a.value().cwiseProduct(w).sum();
  return a.tape()->record(std::move(out), {ia}, [ia, w](Tape& t, int self) {
    t.accumulate(ia, t.grad(self)(0, 0) * w);
  });
}

Var trace_normalized_entropy(const Var& a, bool* degenerate) {
  if (a.rows() != a.cols()) throw InputError("trace_normalized_entropy: matrix must be square");
  const int ia = a.id();
  const Eigen::MatrixXd sym = 0.5 * (a.value() + a.value().transpose());
  const double trace = sym.trace();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(1, 1);
  if (!(trace > 1e-12)) {
    if (degenerate) *degenerate = true;
    return a.tape()->record(std::move(out), {ia}, [](Tape&, int) {});
  }
  if (degenerate) *degenerate = false;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym / trace);
  const Eigen::VectorXd lambda = eig.eigenvalues();
  double s = 0.0;
  for (Eigen::Index j = 0; j < lambda.size(); ++j)
    if (lambda(j) > 0.0) s -= lambda(j) * std::log(std::max(lambda(j), 1e-12));
  out(0, 0) = s;
  // dS/dP = -V diag(log l + 1) V^T needs no eigenvector derivatives, so
  // repeated eigenvalues are harmless.
  const Eigen::VectorXd weight =
      -(lambda.array().max(1e-12).log() + 1.0).matrix();
  Eigen::MatrixXd grad_p = eig.eigenvectors() * weight.asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::MatrixXd p = sym / trace;
  const double inner = grad_p.cwiseProduct(p).sum();
  grad_p.diagonal().array() -= inner;
  Eigen::MatrixXd grad_a = grad_p / trace;
  return a.tape()->record(std::move(out), {ia}, [ia, grad_a](Tape& t, int self) {
    t.accumulate(ia, t.grad(self)(0, 0) * grad_a);
  });
}

}  // namespace infokoop::ad
