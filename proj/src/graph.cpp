#include "oocd/graph.hpp"

#include <cmath>

#include "oocd/errors.hpp"

namespace oocd::nn {

void Node::accumulate(const Mat& g) {
    if (!grad_ready) {
        grad = g;
        grad_ready = true;
    } else {
        grad += g;
    }
}

NodePtr Graph::make(Mat v, std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p->needs_grad) n->needs_grad = true;
    }
    order_.push_back(n);
    return n;
}

NodePtr Graph::constant(Mat v) { return make(std::move(v), {}); }

NodePtr Graph::param(Parameter& p) {
    auto n = make(p.value, {});
    n->needs_grad = p.trainable;
    if (p.trainable) bound_.emplace_back(&p, n);
    return n;
}

NodePtr Graph::matmul(NodePtr a, NodePtr b) {
    auto n = make(a->value * b->value, {a, b});
    n->backprop = [a, b](Node& self) {
        if (a->needs_grad) a->accumulate(self.grad * b->value.transpose());
        if (b->needs_grad) b->accumulate(a->value.transpose() * self.grad);
    };
    return n;
}

NodePtr Graph::transpose(NodePtr a) {
    auto n = make(a->value.transpose(), {a});
    n->backprop = [a](Node& self) {
        if (a->needs_grad) a->accumulate(self.grad.transpose());
    };
    return n;
}

NodePtr Graph::add(NodePtr a, NodePtr b) {
    auto n = make(a->value + b->value, {a, b});
    n->backprop = [a, b](Node& self) {
        if (a->needs_grad) a->accumulate(self.grad);
        if (b->needs_grad) b->accumulate(self.grad);
    };
    return n;
}

NodePtr Graph::add_rowvec(NodePtr a, NodePtr row) {
    Mat v = a->value;
    v.rowwise() += Eigen::RowVectorXd(row->value.row(0));
    auto n = make(std::move(v), {a, row});
    n->backprop = [a, row](Node& self) {
        if (a->needs_grad) a->accumulate(self.grad);
        if (row->needs_grad) row->accumulate(self.grad.colwise().sum());
    };
    return n;
}

NodePtr Graph::add_const(NodePtr a, Mat c) {
    auto n = make(a->value + c, {a});
    n->backprop = [a](Node& self) {
        if (a->needs_grad) a->accumulate(self.grad);
    };
    return n;
}

NodePtr Graph::scale(NodePtr a, double s) {
    auto n = make(a->value * s, {a});
    n->backprop = [a, s](Node& self) {
        if (a->needs_grad) a->accumulate(self.grad * s);
    };
    return n;
}

NodePtr Graph::slice_rows(NodePtr a, int r0, int nrows) {
    auto n = make(a->value.middleRows(r0, nrows), {a});
    n->backprop = [a, r0, nrows](Node& self) {
        if (!a->needs_grad) return;
        Mat g = Mat::Zero(a->value.rows(), a->value.cols());
        g.middleRows(r0, nrows) = self.grad;
        a->accumulate(g);
    };
    return n;
}

NodePtr Graph::slice_cols(NodePtr a, int c0, int ncols) {
    auto n = make(a->value.middleCols(c0, ncols), {a});
    n->backprop = [a, c0, ncols](Node& self) {
        if (!a->needs_grad) return;
        Mat g = Mat::Zero(a->value.rows(), a->value.cols());
        g.middleCols(c0, ncols) = self.grad;
        a->accumulate(g);
    };
    return n;
}

NodePtr Graph::concat_cols(const std::vector<NodePtr>& parts) {
    Eigen::Index rows = parts.front()->value.rows(), cols = 0;
    for (const auto& p : parts) cols += p->value.cols();
    Mat v(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        v.middleCols(c, p->value.cols()) = p->value;
        c += p->value.cols();
    }
    auto n = make(std::move(v), parts);
    n->backprop = [parts](Node& self) {
        Eigen::Index c = 0;
        for (const auto& p : parts) {
            if (p->needs_grad) p->accumulate(self.grad.middleCols(c, p->value.cols()));
            c += p->value.cols();
        }
    };
    return n;
}

NodePtr Graph::concat_rows(const std::vector<NodePtr>& parts) {
    Eigen::Index cols = parts.front()->value.cols(), rows = 0;
    for (const auto& p : parts) rows += p->value.rows();
    Mat v(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        v.middleRows(r, p->value.rows()) = p->value;
        r += p->value.rows();
    }
    auto n = make(std::move(v), parts);
    n->backprop = [parts](Node& self) {
        Eigen::Index r = 0;
        for (const auto& p : parts) {
            if (p->needs_grad) p->accumulate(self.grad.middleRows(r, p->value.rows()));
            r += p->value.rows();
        }
    };
    return n;
}

NodePtr Graph::gather_rows(NodePtr table, std::vector<int> idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), table->value.cols());
    for (size_t i = 0; i < idx.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = table->value.row(idx[i]);
    auto n = make(std::move(v), {table});
    n->backprop = [table, idx = std::move(idx)](Node& self) {
        if (!table->needs_grad) return;
        Mat g = Mat::Zero(table->value.rows(), table->value.cols());
        for (size_t i = 0; i < idx.size(); ++i) {
            g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
        }
        table->accumulate(g);
    };
    return n;
}

NodePtr Graph::layer_norm(NodePtr a, NodePtr gain, NodePtr bias, double eps) {
    const Mat& x = a->value;
    const Eigen::Index R = x.rows(), C = x.cols();
    Mat xhat(R, C);
    Eigen::VectorXd inv_sigma(R);
    for (Eigen::Index r = 0; r < R; ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        inv_sigma(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (x.row(r).array() - mu) * inv_sigma(r);
    }
    Mat y = (xhat.array().rowwise() * Eigen::RowVectorXd(gain->value.row(0)).array())
                .rowwise() +
            Eigen::RowVectorXd(bias->value.row(0)).array();
    auto n = make(std::move(y), {a, gain, bias});
    n->backprop = [a, gain, bias, xhat = std::move(xhat),
                   inv_sigma = std::move(inv_sigma)](Node& self) {
        const Mat& dy = self.grad;
        if (gain->needs_grad) {
            gain->accumulate((dy.array() * xhat.array()).colwise().sum().matrix());
        }
        if (bias->needs_grad) bias->accumulate(dy.colwise().sum());
        if (a->needs_grad) {
            const Eigen::Index R = dy.rows(), C = dy.cols();
            Mat dxhat = dy.array().rowwise() * Eigen::RowVectorXd(gain->value.row(0)).array();
            Mat dx(R, C);
            for (Eigen::Index r = 0; r < R; ++r) {
                const double m1 = dxhat.row(r).mean();
                const double m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
                dx.row(r) =
                    (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_sigma(r);
            }
            a->accumulate(dx);
        }
    };
    return n;
}

NodePtr Graph::gelu(NodePtr a) {
    const Mat& x = a->value;
    const auto phi = [](double v) { return 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))); };
    Mat y = x.array() * x.unaryExpr(phi).array();
    auto n = make(std::move(y), {a});
    n->backprop = [a, phi](Node& self) {
        if (!a->needs_grad) return;
        const auto x = a->value.array();
        const double inv_sqrt2pi = 0.3989422804014327;
        Mat dx = self.grad.array() * (a->value.unaryExpr(phi).array() +
                                      x * inv_sqrt2pi * (-0.5 * x.square()).exp());
        a->accumulate(dx);
    };
    return n;
}

NodePtr Graph::softmax_rows(NodePtr a) {
    const Mat& x = a->value;
    Mat y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Eigen::ArrayXd e = (x.row(r).array() - x.row(r).maxCoeff()).exp();
        y.row(r) = e / e.sum();
    }
    auto n = make(std::move(y), {a});
    n->backprop = [a](Node& self) {
        if (!a->needs_grad) return;
        const Mat& y = self.value;
        const Mat& dy = self.grad;
        Mat dx(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const double dot = y.row(r).dot(dy.row(r));
            dx.row(r) = y.row(r).array() * (dy.row(r).array() - dot);
        }
        a->accumulate(dx);
    };
    return n;
}

NodePtr Graph::gather_logprobs(NodePtr logits, std::vector<int> targets) {
    const Mat& z = logits->value;
    if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
        throw ConfigError("gather_logprobs: one target per logit row required");
    }
    Mat probs(z.rows(), z.cols());
    Mat v(z.rows(), 1);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mx = z.row(r).maxCoeff();
        Eigen::ArrayXd e = (z.row(r).array() - mx).exp();
        const double sum = e.sum();
        probs.row(r) = e / sum;
        v(r, 0) = z(r, targets[static_cast<size_t>(r)]) - mx - std::log(sum);
    }
    auto n = make(std::move(v), {logits});
    n->backprop = [logits, targets = std::move(targets), probs = std::move(probs)](Node& self) {
        if (!logits->needs_grad) return;
        Mat g = Mat::Zero(probs.rows(), probs.cols());
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            g.row(r) = -self.grad(r, 0) * probs.row(r);
            g(r, targets[static_cast<size_t>(r)]) += self.grad(r, 0);
        }
        logits->accumulate(g);
    };
    return n;
}

NodePtr Graph::log_sigmoid(NodePtr a) {
    const auto x = a->value.array();
    // log sigma(x) = -log1p(exp(-x)), computed stably on both tails
    Mat y = x.unaryExpr([](double v) {
        return v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
    });
    auto n = make(std::move(y), {a});
    n->backprop = [a](Node& self) {
        if (!a->needs_grad) return;
        Mat dx = self.grad.array() *
                 a->value.array().unaryExpr([](double v) {
                     return v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v))
                                     : 1.0 / (1.0 + std::exp(v));
                 });
        a->accumulate(dx);
    };
    return n;
}

NodePtr Graph::sum(NodePtr a) {
    Mat v(1, 1);
    v(0, 0) = a->value.sum();
    auto n = make(std::move(v), {a});
    n->backprop = [a](Node& self) {
        if (a->needs_grad) {
            a->accumulate(Mat::Constant(a->value.rows(), a->value.cols(), self.grad(0, 0)));
        }
    };
    return n;
}

NodePtr Graph::mean(NodePtr a) {
    const double inv = 1.0 / static_cast<double>(a->value.size());
    Mat v(1, 1);
    v(0, 0) = a->value.sum() * inv;
    auto n = make(std::move(v), {a});
    n->backprop = [a, inv](Node& self) {
        if (a->needs_grad) {
            a->accumulate(
                Mat::Constant(a->value.rows(), a->value.cols(), self.grad(0, 0) * inv));
        }
    };
    return n;
}

void Graph::backward(const NodePtr& root, double seed) {
    if (root->value.rows() != 1 || root->value.cols() != 1) {
        throw ConfigError("backward root must be a scalar node");
    }
    root->accumulate(Mat::Constant(1, 1, seed));
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node& n = **it;
        if (n.needs_grad && n.grad_ready && n.backprop) n.backprop(n);
    }
    for (auto& [p, node] : bound_) {
        if (node->grad_ready) {
            if (p->grad.size() == 0) p->zero_grad();
            p->grad += node->grad;
        }
    }
}

}  // namespace oocd::nn
