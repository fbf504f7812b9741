#include "seqdiff/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace seqdiff::ad {

void Tape::backward(const Var& out) {
    if (out->value.rows() != 1 || out->value.cols() != 1) {
        throw std::invalid_argument("backward expects a 1x1 output");
    }
    out->grad(0, 0) = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.backprop && n.needs_grad) n.backprop(n);
    }
}

namespace {
void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}
}  // namespace

Var matmul(Tape& t, const Var& a, const Var& b) {
    if (a->value.cols() != b->value.rows()) {
        throw std::invalid_argument("matmul: inner dimension mismatch");
    }
    return t.make(a->value * b->value, {a, b}, [a, b](Node& n) {
        if (a->needs_grad) a->grad.noalias() += n.grad * b->value.transpose();
        if (b->needs_grad) b->grad.noalias() += a->value.transpose() * n.grad;
    });
}

Var matmul_nt(Tape& t, const Var& a, const Var& b) {
    if (a->value.cols() != b->value.cols()) {
        throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    }
    return t.make(a->value * b->value.transpose(), {a, b}, [a, b](Node& n) {
        if (a->needs_grad) a->grad.noalias() += n.grad * b->value;
        if (b->needs_grad) b->grad.noalias() += n.grad.transpose() * a->value;
    });
}

Var add(Tape& t, const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return t.make(a->value + b->value, {a, b}, [a, b](Node& n) {
        if (a->needs_grad) a->grad += n.grad;
        if (b->needs_grad) b->grad += n.grad;
    });
}

Var sub(Tape& t, const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return t.make(a->value - b->value, {a, b}, [a, b](Node& n) {
        if (a->needs_grad) a->grad += n.grad;
        if (b->needs_grad) b->grad -= n.grad;
    });
}

Var cmul(Tape& t, const Var& a, const Var& b) {
    check_same_shape(a, b, "cmul");
    return t.make(a->value.cwiseProduct(b->value), {a, b}, [a, b](Node& n) {
        if (a->needs_grad) a->grad += n.grad.cwiseProduct(b->value);
        if (b->needs_grad) b->grad += n.grad.cwiseProduct(a->value);
    });
}

Var scale(Tape& t, const Var& a, double c) {
    return t.make(a->value * c, {a}, [a, c](Node& n) {
        if (a->needs_grad) a->grad += n.grad * c;
    });
}

Var add_const(Tape& t, const Var& a, const Matrix& m) {
    if (a->value.rows() != m.rows() || a->value.cols() != m.cols()) {
        throw std::invalid_argument("add_const: shape mismatch");
    }
    return t.make(a->value + m, {a}, [a](Node& n) {
        if (a->needs_grad) a->grad += n.grad;
    });
}

Var add_rowvec(Tape& t, const Var& a, const Var& row) {
    if (row->value.rows() != 1 || row->value.cols() != a->value.cols()) {
        throw std::invalid_argument("add_rowvec: row must be 1 x cols(a)");
    }
    return t.make(a->value.rowwise() + row->value.row(0), {a, row}, [a, row](Node& n) {
        if (a->needs_grad) a->grad += n.grad;
        if (row->needs_grad) row->grad += n.grad.colwise().sum();
    });
}

Var broadcast_row(Tape& t, const Var& row, Eigen::Index n_rows) {
    if (row->value.rows() != 1) throw std::invalid_argument("broadcast_row: not a row");
    Matrix v = row->value.replicate(n_rows, 1);
    return t.make(std::move(v), {row}, [row](Node& n) {
        if (row->needs_grad) row->grad += n.grad.colwise().sum();
    });
}

Var gelu(Tape& t, const Var& a) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double c = 0.044715;
    const Matrix& x = a->value;
    Matrix inner = (k * (x.array() + c * x.array().cube())).matrix();
    Matrix th = inner.array().tanh().matrix();
    Matrix y = (0.5 * x.array() * (1.0 + th.array())).matrix();
    return t.make(std::move(y), {a}, [a, th = std::move(th), k, c](Node& n) {
        if (!a->needs_grad) return;
        const auto& x = a->value.array();
        auto sech2 = 1.0 - th.array().square();
        auto dinner = k * (1.0 + 3.0 * c * x.square());
        auto dy = 0.5 * (1.0 + th.array()) + 0.5 * x * sech2 * dinner;
        a->grad.array() += n.grad.array() * dy;
    });
}

Var slice_cols(Tape& t, const Var& a, Eigen::Index c0, Eigen::Index nc) {
    if (c0 < 0 || c0 + nc > a->value.cols()) {
        throw std::out_of_range("slice_cols out of range");
    }
    return t.make(a->value.middleCols(c0, nc), {a}, [a, c0, nc](Node& n) {
        if (a->needs_grad) a->grad.middleCols(c0, nc) += n.grad;
    });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Eigen::Index rows = parts[0]->value.rows(), cols = 0;
    for (const auto& p : parts) cols += p->value.cols();
    Matrix v(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        v.middleCols(c, p->value.cols()) = p->value;
        c += p->value.cols();
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return t.make(std::move(v), parents, [parts](Node& n) {
        Eigen::Index c = 0;
        for (const auto& p : parts) {
            if (p->needs_grad) p->grad += n.grad.middleCols(c, p->value.cols());
            c += p->value.cols();
        }
    });
}

Var softmax_rows(Tape& t, const Var& a, const Matrix* add_mask) {
    Matrix z = a->value;
    if (add_mask) {
        if (z.rows() != add_mask->rows() || z.cols() != add_mask->cols()) {
            throw std::invalid_argument("softmax_rows: mask shape mismatch");
        }
        z += *add_mask;
    }
    Matrix s(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::ArrayXd row = z.row(i).array();
        double m = row.maxCoeff();
        Eigen::ArrayXd e = (row - m).exp();
        s.row(i) = (e / e.sum()).matrix();
    }
    return t.make(s, {a}, [a, s](Node& n) {
        if (!a->needs_grad) return;
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            double dot = n.grad.row(i).dot(s.row(i));
            a->grad.row(i).array() +=
                s.row(i).array() * (n.grad.row(i).array() - dot);
        }
    });
}

Var layernorm_rows(Tape& t, const Var& a, const Var& gain, const Var& bias,
                   double eps) {
    const Matrix& x = a->value;
    const Eigen::Index H = x.cols();
    Matrix xhat(x.rows(), H);
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double mu = x.row(i).mean();
        Eigen::ArrayXd d = x.row(i).array() - mu;
        double var = d.square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (d * inv_std(i)).matrix();
    }
    Matrix y = (xhat.array().rowwise() * gain->value.row(0).array()).matrix();
    y.rowwise() += bias->value.row(0);
    return t.make(std::move(y), {a, gain, bias},
                  [a, gain, bias, xhat = std::move(xhat),
                   inv_std = std::move(inv_std), H](Node& n) {
        if (gain->needs_grad) {
            gain->grad.row(0) += (n.grad.array() * xhat.array()).colwise().sum().matrix();
        }
        if (bias->needs_grad) bias->grad.row(0) += n.grad.colwise().sum();
        if (!a->needs_grad) return;
        for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
            Eigen::Array<double, 1, Eigen::Dynamic> g =
                n.grad.row(i).array() * gain->value.row(0).array();
            double gsum = g.sum();
            double gxsum = (g * xhat.row(i).array()).sum();
            a->grad.row(i).array() +=
                inv_std(i) * (g - gsum / H - xhat.row(i).array() * gxsum / H);
        }
    });
}

Var gather_rows(Tape& t, const Var& table, const std::vector<int>& ids) {
    Matrix v(static_cast<Eigen::Index>(ids.size()), table->value.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table->value.rows()) {
            throw std::out_of_range("gather_rows: id out of range");
        }
        v.row(static_cast<Eigen::Index>(i)) = table->value.row(ids[i]);
    }
    return t.make(std::move(v), {table}, [table, ids](Node& n) {
        if (!table->needs_grad) return;
        for (size_t i = 0; i < ids.size(); ++i) {
            table->grad.row(ids[i]) += n.grad.row(static_cast<Eigen::Index>(i));
        }
    });
}

Var neg_sqdist_logits(Tape& t, const Var& a, const Var& table) {
    if (a->value.cols() != table->value.cols()) {
        throw std::invalid_argument("neg_sqdist_logits: dimension mismatch");
    }
    const Matrix& z = a->value;
    const Matrix& e = table->value;
    Eigen::VectorXd zn = z.rowwise().squaredNorm();
    Eigen::VectorXd en = e.rowwise().squaredNorm();
    Matrix logits = 2.0 * (z * e.transpose());
    logits.colwise() -= zn;
    logits.rowwise() -= en.transpose();
    return t.make(std::move(logits), {a, table}, [a, table](Node& n) {
        // d logits(i,v) / d z_i = -2 (z_i - e_v); / d e_v = 2 (z_i - e_v)
        const Matrix& z = a->value;
        const Matrix& e = table->value;
        Eigen::VectorXd grow = n.grad.rowwise().sum();
        Eigen::VectorXd gcol = n.grad.colwise().sum();
        if (a->needs_grad) {
            a->grad.noalias() += 2.0 * (n.grad * e);
            a->grad -= 2.0 * (z.array().colwise() * grow.array()).matrix();
        }
        if (table->needs_grad) {
            table->grad.noalias() += 2.0 * (n.grad.transpose() * z);
            table->grad -= 2.0 * (e.array().colwise() * gcol.array()).matrix();
        }
    });
}

Var weighted_sq_error(Tape& t, const Var& a, const Var& b,
                      const Eigen::VectorXd& w) {
    check_same_shape(a, b, "weighted_sq_error");
    if (w.size() != a->value.rows()) {
        throw std::invalid_argument("weighted_sq_error: weight length mismatch");
    }
    Matrix diff = a->value - b->value;
    double total = (diff.rowwise().squaredNorm().array() * w.array()).sum();
    Matrix out(1, 1);
    out(0, 0) = total;
    return t.make(std::move(out), {a, b},
                  [a, b, diff = std::move(diff), w](Node& n) {
        double g = n.grad(0, 0);
        Matrix d = 2.0 * g * (diff.array().colwise() * w.array()).matrix();
        if (a->needs_grad) a->grad += d;
        if (b->needs_grad) b->grad -= d;
    });
}

Var cross_entropy_rows(Tape& t, const Var& logits, const std::vector<int>& ids,
                       const Eigen::VectorXd& w) {
    const Matrix& l = logits->value;
    if (static_cast<Eigen::Index>(ids.size()) != l.rows() || w.size() != l.rows()) {
        throw std::invalid_argument("cross_entropy_rows: length mismatch");
    }
    Matrix probs(l.rows(), l.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        Eigen::ArrayXd row = l.row(i).array();
        double m = row.maxCoeff();
        Eigen::ArrayXd e = (row - m).exp();
        double Z = e.sum();
        probs.row(i) = (e / Z).matrix();
        total += w(i) * (std::log(Z) + m - l(i, ids[i]));
    }
    Matrix out(1, 1);
    out(0, 0) = total;
    return t.make(std::move(out), {logits},
                  [logits, probs = std::move(probs), ids, w](Node& n) {
        if (!logits->needs_grad) return;
        double g = n.grad(0, 0);
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            logits->grad.row(i) += g * w(i) * probs.row(i);
            logits->grad(i, ids[i]) -= g * w(i);
        }
    });
}

Var weighted_mean_rows(Tape& t, const Var& a, const Eigen::VectorXd& w) {
    if (w.size() != a->value.rows()) {
        throw std::invalid_argument("weighted_mean_rows: weight length mismatch");
    }
    double wsum = w.sum();
    if (wsum <= 0.0) throw std::invalid_argument("weighted_mean_rows: zero weight");
    Matrix v = (w.transpose() * a->value) / wsum;
    return t.make(std::move(v), {a}, [a, w, wsum](Node& n) {
        if (a->needs_grad) a->grad.noalias() += (w / wsum) * n.grad;
    });
}

Var sum_all(Tape& t, const Var& a) {
    Matrix out(1, 1);
    out(0, 0) = a->value.sum();
    return t.make(std::move(out), {a}, [a](Node& n) {
        if (a->needs_grad) a->grad.array() += n.grad(0, 0);
    });
}

}  // namespace seqdiff::ad
