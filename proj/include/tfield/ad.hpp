#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

namespace tfield::ad {

// Matrix-valued reverse-mode tape. Backward rules are themselves expressed
// as tape operations, so gradients stay differentiable: backward with
// create_graph=true yields Vars whose own gradients can be taken. Samples
// occupy columns; batched evaluation is just wider matrices.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Eigen::MatrixXd value;
    bool tracked = false;
    std::vector<Var> parents;
    std::function<std::vector<Var>(const Var& grad)> backward_fn;
};

/// While alive, new ops record no graph (used for plain-value backward).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

Var constant(Eigen::MatrixXd v);
Var scalar(double v);
/// Differentiation root; tracked even inside NoGradGuard-free regions.
Var leaf(Eigen::MatrixXd v);

inline const Eigen::MatrixXd& val(const Var& v) { return v->value; }

// elementwise / structural ops
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scalar_mul(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var softplus(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var cwise_max(const Var& a, const Var& b);
Var cwise_min(const Var& a, const Var& b);
/// Wrap each entry into (-pi, pi]; derivative treated as 1 everywhere.
Var wrap(const Var& a);

// broadcasting / reductions
Var add_col(const Var& a, const Var& bias);        // (n,B) + (n,1)
Var tile_cols(const Var& a, Eigen::Index cols);    // (n,1) -> (n,B)
Var tile_rows(const Var& a, Eigen::Index rows);    // (1,B) -> (n,B)
Var rowsum(const Var& a);                          // (n,B) -> (n,1)
Var rowmax(const Var& a);                          // (n,B) -> (n,1), max over columns
Var colsum(const Var& a);                          // (n,B) -> (1,B)
Var sum_all(const Var& a);                         // (n,B) -> (1,1)
Var mul_rows(const Var& a, const Var& r);          // (n,B) * broadcast (1,B)
Var concat_rows(const Var& a, const Var& b);
Var slice_rows(const Var& a, Eigen::Index r0, Eigen::Index n);

class GradMap {
public:
    /// Gradient of the root w.r.t. v; zeros if v never contributed.
    Var at(const Var& v) const;
    std::unordered_map<Node*, Var> grads;
};

/// Reverse pass from a 1x1 root. With create_graph the returned gradients
/// are tape nodes supporting further differentiation.
GradMap backward(const Var& root, bool create_graph);

}  // namespace tfield::ad
