#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace seqdiff::ad {

using Matrix = Eigen::MatrixXd;

struct Node;
using Var = std::shared_ptr<Node>;

// A value in the computation graph. Leaves (parameters and constants) have
// no backprop function; interior nodes accumulate into their parents' grads.
struct Node {
    Matrix value;
    Matrix grad;  // same shape as value, zeroed on creation
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;
    bool needs_grad = true;

    explicit Node(Matrix v, bool ng = true)
        : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())),
          needs_grad(ng) {}

    void zero_grad() { grad.setZero(); }
};

// Parameter leaf: lives outside any tape, grad persists until zeroed by the
// optimizer.
inline Var leaf(Matrix v) { return std::make_shared<Node>(std::move(v), true); }

// Records the forward pass in creation order; backward() walks it in reverse.
// One tape per forward pass; parameters are shared leaves across tapes.
class Tape {
public:
    Var constant(Matrix v) {
        auto n = std::make_shared<Node>(std::move(v), false);
        nodes_.push_back(n);
        return n;
    }

    Var make(Matrix value, std::vector<Var> parents,
             std::function<void(Node&)> backprop) {
        auto n = std::make_shared<Node>(std::move(value), true);
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
        nodes_.push_back(n);
        return n;
    }

    // Seeds d(out)/d(out) = 1 for a 1x1 output and propagates. Parameter
    // leaf grads accumulate (they are not cleared here).
    void backward(const Var& out);

    size_t size() const { return nodes_.size(); }

private:
    std::vector<Var> nodes_;
};

// --- primitive operations -------------------------------------------------

Var matmul(Tape& t, const Var& a, const Var& b);        // A * B
Var matmul_nt(Tape& t, const Var& a, const Var& b);     // A * B^T
Var add(Tape& t, const Var& a, const Var& b);
Var sub(Tape& t, const Var& a, const Var& b);
Var cmul(Tape& t, const Var& a, const Var& b);          // elementwise
Var scale(Tape& t, const Var& a, double c);
Var add_const(Tape& t, const Var& a, const Matrix& m);
Var add_rowvec(Tape& t, const Var& a, const Var& row);  // row is 1 x cols
Var broadcast_row(Tape& t, const Var& row, Eigen::Index n_rows);
Var gelu(Tape& t, const Var& a);                        // tanh approximation
Var slice_cols(Tape& t, const Var& a, Eigen::Index c0, Eigen::Index nc);
Var concat_cols(Tape& t, const std::vector<Var>& parts);

// Row-wise softmax of (a + add_mask); pass nullptr for no mask.
Var softmax_rows(Tape& t, const Var& a, const Matrix* add_mask);

// Per-row layer normalization with learnable 1xH gain and bias.
Var layernorm_rows(Tape& t, const Var& a, const Var& gain, const Var& bias,
                   double eps = 1e-6);

// Embedding lookup: row i of the result is table row ids[i].
Var gather_rows(Tape& t, const Var& table, const std::vector<int>& ids);

// logits(i, v) = -||a_i - table_v||^2.
Var neg_sqdist_logits(Tape& t, const Var& a, const Var& table);

// Scalar: sum_i w_i * ||a_i - b_i||^2 (1x1 output).
Var weighted_sq_error(Tape& t, const Var& a, const Var& b,
                      const Eigen::VectorXd& row_weights);

// Scalar: sum_i w_i * (logsumexp(l_i) - l_i[ids[i]]).
Var cross_entropy_rows(Tape& t, const Var& logits, const std::vector<int>& ids,
                       const Eigen::VectorXd& row_weights);

// 1 x H pooled row: sum_i w_i a_i / sum_i w_i.
Var weighted_mean_rows(Tape& t, const Var& a, const Eigen::VectorXd& row_weights);

Var sum_all(Tape& t, const Var& a);

}  // namespace seqdiff::ad
