#pragma once

// Small reverse-mode gradient engine over dense matrices. A Tape records
// every node; backward() walks it once in reverse. Scalars are 1x1 matrices.

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace infokoop::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Eigen::MatrixXd& value() const;
  const Eigen::MatrixXd& grad() const;
  double scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Var variable(Eigen::MatrixXd value);
  Var constant(Eigen::MatrixXd value);
  Var record(Eigen::MatrixXd value, std::vector<int> inputs, Backward backward);

  // Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(const Var& root);

  const Eigen::MatrixXd& value(int id) const { return nodes_[id].value; }
  const Eigen::MatrixXd& grad(int id) const { return nodes_[id].grad; }
  Eigen::MatrixXd& grad_mut(int id);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulates g into the gradient of node `id` (no-op for constants).
  void accumulate(int id, const Eigen::MatrixXd& g);

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    Backward backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);  // matrix product
Var operator*(double s, const Var& a);
Var operator-(const Var& a);

Var transpose(const Var& a);
Var hadamard(const Var& a, const Var& b);
// a (r x c) plus a 1 x c row broadcast over rows.
Var add_row(const Var& a, const Var& row);
Var sub_row(const Var& a, const Var& row);
// a (r x c) times a 1 x c row elementwise, broadcast over rows.
Var mul_row(const Var& a, const Var& row);
Var relu(const Var& a);
Var exp(const Var& a);
Var sqrt(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var reciprocal(const Var& a);
// max(a, floor) elementwise; the gradient is blocked where the floor is
// active. `clipped` receives the number of clamped entries.
Var clamp_min(const Var& a, double floor, int* clipped = nullptr);
Var add_scalar(const Var& a, double s);
Var sum(const Var& a);
Var mean(const Var& a);
Var column_mean(const Var& a);  // 1 x c
Var row_sum(const Var& a);      // r x 1
Var rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var row_logsumexp(const Var& a);  // r x 1
// sum_ij w_ij a_ij with constant weights.
Var weighted_sum(const Var& a, const Eigen::MatrixXd& w);
// -sum_j l_j log l_j over the eigenvalues l_j of a / tr(a), for symmetric a.
// Eigenvalues below 1e-12 are clamped inside the log. A trace below 1e-12
// yields 0 with zero gradient and sets *degenerate.
Var trace_normalized_entropy(const Var& a, bool* degenerate = nullptr);

}  // namespace infokoop::ad
