#include "tfield/ad.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace tfield::ad {

namespace {

thread_local bool g_grad_enabled = true;

bool any_tracked(const std::vector<Var>& vars) {
    for (const auto& v : vars)
        if (v->tracked) return true;
    return false;
}

Var make(Eigen::MatrixXd value, std::vector<Var> parents,
         std::function<std::vector<Var>(const Var&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (g_grad_enabled && any_tracked(parents)) {
        n->tracked = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

Var constant(Eigen::MatrixXd v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

Var scalar(double v) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
}

Var leaf(Eigen::MatrixXd v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->tracked = true;
    return n;
}

Var add(const Var& a, const Var& b) {
    return make(a->value + b->value, {a, b},
                [](const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
    return make(a->value - b->value, {a, b},
                [](const Var& g) { return std::vector<Var>{g, neg(g)}; });
}

Var neg(const Var& a) {
    return make(-a->value, {a}, [](const Var& g) { return std::vector<Var>{neg(g)}; });
}

Var mul(const Var& a, const Var& b) {
    return make(a->value.cwiseProduct(b->value), {a, b}, [a, b](const Var& g) {
        return std::vector<Var>{mul(g, b), mul(g, a)};
    });
}

Var div(const Var& a, const Var& b) {
    return make(a->value.cwiseQuotient(b->value), {a, b}, [a, b](const Var& g) {
        Var db = neg(div(mul(g, a), mul(b, b)));
        return std::vector<Var>{div(g, b), db};
    });
}

Var scalar_mul(const Var& a, double c) {
    return make(a->value * c, {a},
                [c](const Var& g) { return std::vector<Var>{scalar_mul(g, c)}; });
}

Var add_scalar(const Var& a, double c) {
    return make(a->value.array() + c, {a},
                [](const Var& g) { return std::vector<Var>{g}; });
}

Var matmul(const Var& a, const Var& b) {
    return make(a->value * b->value, {a, b}, [a, b](const Var& g) {
        return std::vector<Var>{matmul(g, transpose(b)), matmul(transpose(a), g)};
    });
}

Var transpose(const Var& a) {
    return make(a->value.transpose(), {a},
                [](const Var& g) { return std::vector<Var>{transpose(g)}; });
}

Var sin(const Var& a) {
    return make(a->value.array().sin(), {a}, [a](const Var& g) {
        return std::vector<Var>{mul(g, cos(a))};
    });
}

Var cos(const Var& a) {
    return make(a->value.array().cos(), {a}, [a](const Var& g) {
        return std::vector<Var>{neg(mul(g, sin(a)))};
    });
}

Var exp(const Var& a) {
    return make(a->value.array().exp(), {a}, [a](const Var& g) {
        return std::vector<Var>{mul(g, exp(a))};
    });
}

Var softplus(const Var& a) {
    Eigen::MatrixXd v = a->value.unaryExpr([](double x) {
        return x > 30.0 ? x : std::log1p(std::exp(x));
    });
    return make(std::move(v), {a}, [a](const Var& g) {
        return std::vector<Var>{mul(g, sigmoid(a))};
    });
}

Var sigmoid(const Var& a) {
    Eigen::MatrixXd v = a->value.unaryExpr([](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    return make(std::move(v), {a}, [a](const Var& g) {
        Var s = sigmoid(a);
        return std::vector<Var>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
    });
}

Var square(const Var& a) {
    return make(a->value.array().square(), {a}, [a](const Var& g) {
        return std::vector<Var>{mul(g, scalar_mul(a, 2.0))};
    });
}

Var sqrt(const Var& a) {
    return make(a->value.array().sqrt(), {a}, [a](const Var& g) {
        return std::vector<Var>{div(scalar_mul(g, 0.5), sqrt(a))};
    });
}

Var cwise_max(const Var& a, const Var& b) {
    Eigen::MatrixXd mask =
        (a->value.array() >= b->value.array()).cast<double>();
    return make(a->value.cwiseMax(b->value), {a, b}, [mask](const Var& g) {
        Var m = constant(mask);
        Var mc = constant(Eigen::MatrixXd::Ones(mask.rows(), mask.cols()) - mask);
        return std::vector<Var>{mul(g, m), mul(g, mc)};
    });
}

Var cwise_min(const Var& a, const Var& b) {
    Eigen::MatrixXd mask =
        (a->value.array() <= b->value.array()).cast<double>();
    return make(a->value.cwiseMin(b->value), {a, b}, [mask](const Var& g) {
        Var m = constant(mask);
        Var mc = constant(Eigen::MatrixXd::Ones(mask.rows(), mask.cols()) - mask);
        return std::vector<Var>{mul(g, m), mul(g, mc)};
    });
}

Var wrap(const Var& a) {
    Eigen::MatrixXd v = a->value.unaryExpr([](double x) {
        double w = std::fmod(x + M_PI, 2.0 * M_PI);
        if (w <= 0) w += 2.0 * M_PI;
        return w - M_PI;
    });
    return make(std::move(v), {a},
                [](const Var& g) { return std::vector<Var>{g}; });
}

Var add_col(const Var& a, const Var& bias) {
    assert(bias->value.cols() == 1 && bias->value.rows() == a->value.rows());
    Eigen::MatrixXd v = a->value;
    v.colwise() += Eigen::VectorXd(bias->value.col(0));
    return make(std::move(v), {a, bias}, [](const Var& g) {
        return std::vector<Var>{g, rowsum(g)};
    });
}

Var tile_cols(const Var& a, Eigen::Index cols) {
    assert(a->value.cols() == 1);
    return make(a->value.replicate(1, cols), {a},
                [](const Var& g) { return std::vector<Var>{rowsum(g)}; });
}

Var tile_rows(const Var& a, Eigen::Index rows) {
    assert(a->value.rows() == 1);
    return make(a->value.replicate(rows, 1), {a},
                [](const Var& g) { return std::vector<Var>{colsum(g)}; });
}

Var rowsum(const Var& a) {
    Eigen::Index cols = a->value.cols();
    return make(a->value.rowwise().sum(), {a}, [cols](const Var& g) {
        return std::vector<Var>{tile_cols(g, cols)};
    });
}

Var rowmax(const Var& a) {
    Eigen::VectorXd m = a->value.rowwise().maxCoeff();
    Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(a->value.rows(), a->value.cols());
    for (Eigen::Index i = 0; i < a->value.rows(); ++i) {
        Eigen::Index j;
        a->value.row(i).maxCoeff(&j);  // first max wins
        mask(i, j) = 1.0;
    }
    Eigen::Index cols = a->value.cols();
    return make(m, {a}, [mask, cols](const Var& g) {
        return std::vector<Var>{mul(tile_cols(g, cols), constant(mask))};
    });
}

Var colsum(const Var& a) {
    Eigen::Index rows = a->value.rows();
    return make(a->value.colwise().sum(), {a}, [rows](const Var& g) {
        return std::vector<Var>{tile_rows(g, rows)};
    });
}

Var sum_all(const Var& a) {
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = a->value.sum();
    Eigen::Index rows = a->value.rows(), cols = a->value.cols();
    return make(std::move(v), {a}, [rows, cols](const Var& g) {
        return std::vector<Var>{tile_rows(tile_cols(g, cols), rows)};
    });
}

Var mul_rows(const Var& a, const Var& r) {
    assert(r->value.rows() == 1 && r->value.cols() == a->value.cols());
    Eigen::MatrixXd v = a->value.array().rowwise() * r->value.row(0).array();
    return make(std::move(v), {a, r}, [a, r](const Var& g) {
        Var da = mul_rows(g, r);
        Var dr = colsum(mul(g, a));
        return std::vector<Var>{da, dr};
    });
}

Var concat_rows(const Var& a, const Var& b) {
    assert(a->value.cols() == b->value.cols());
    Eigen::MatrixXd v(a->value.rows() + b->value.rows(), a->value.cols());
    v.topRows(a->value.rows()) = a->value;
    v.bottomRows(b->value.rows()) = b->value;
    Eigen::Index na = a->value.rows(), nb = b->value.rows();
    return make(std::move(v), {a, b}, [na, nb](const Var& g) {
        return std::vector<Var>{slice_rows(g, 0, na), slice_rows(g, na, nb)};
    });
}

Var slice_rows(const Var& a, Eigen::Index r0, Eigen::Index n) {
    Eigen::Index total = a->value.rows();
    return make(a->value.middleRows(r0, n), {a}, [r0, n, total](const Var& g) {
        // scatter back by padding with zero blocks; stays differentiable
        Var out = g;
        if (r0 > 0)
            out = concat_rows(constant(Eigen::MatrixXd::Zero(r0, g->value.cols())), out);
        if (total - r0 - n > 0)
            out = concat_rows(
                out, constant(Eigen::MatrixXd::Zero(total - r0 - n, g->value.cols())));
        return std::vector<Var>{out};
    });
}

Var GradMap::at(const Var& v) const {
    auto it = grads.find(v.get());
    if (it != grads.end()) return it->second;
    return constant(Eigen::MatrixXd::Zero(v->value.rows(), v->value.cols()));
}

GradMap backward(const Var& root, bool create_graph) {
    if (root->value.rows() != 1 || root->value.cols() != 1)
        throw std::logic_error("backward requires a 1x1 root");

    // iterative topological order over tracked nodes
    std::vector<Node*> order;
    std::unordered_map<Node*, const Var*> canon;
    {
        std::unordered_map<Node*, int> state;  // 0 new, 1 open, 2 done
        std::vector<std::pair<const Var*, std::size_t>> stack;
        stack.emplace_back(&root, 0);
        state[root.get()] = 1;
        canon[root.get()] = &root;
        while (!stack.empty()) {
            auto& [vp, idx] = stack.back();
            Node* n = vp->get();
            if (idx < n->parents.size()) {
                const Var& p = n->parents[idx++];
                if (p->tracked && state[p.get()] == 0) {
                    state[p.get()] = 1;
                    canon[p.get()] = &p;
                    stack.emplace_back(&p, 0);
                }
            } else {
                state[n] = 2;
                order.push_back(n);
                stack.pop_back();
            }
        }
    }

    GradMap out;
    {
        std::unique_ptr<NoGradGuard> guard;
        if (!create_graph) guard = std::make_unique<NoGradGuard>();

        out.grads[root.get()] = constant(Eigen::MatrixXd::Ones(1, 1));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            auto git = out.grads.find(n);
            if (git == out.grads.end() || !n->backward_fn) continue;
            std::vector<Var> contrib = n->backward_fn(git->second);
            for (std::size_t i = 0; i < n->parents.size(); ++i) {
                Node* p = n->parents[i].get();
                if (!p->tracked) continue;
                auto pit = out.grads.find(p);
                if (pit == out.grads.end())
                    out.grads[p] = contrib[i];
                else
                    pit->second = add(pit->second, contrib[i]);
            }
        }
    }
    return out;
}

}  // namespace tfield::ad
