#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oocd::nn {

using Mat = Eigen::MatrixXd;

// A trainable or frozen named tensor. Gradients are only ever allocated for
// trainable parameters.
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;  // empty unless trainable and touched by a backward pass
    bool trainable = false;

    void zero_grad() {
        if (trainable) grad = Mat::Zero(value.rows(), value.cols());
    }
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    bool grad_ready = false;
    std::function<void(Node&)> backprop;  // pulls this->grad into parents
    std::vector<NodePtr> parents;

    void accumulate(const Mat& g);
};

// Dynamic reverse-mode tape over dense matrices. Nodes are created in
// topological order, so backward() is a single reverse sweep.
class Graph {
public:
    NodePtr constant(Mat v);
    // Leaf bound to a parameter; its gradient is added to p.grad on backward.
    NodePtr param(Parameter& p);

    NodePtr matmul(NodePtr a, NodePtr b);
    NodePtr transpose(NodePtr a);
    NodePtr add(NodePtr a, NodePtr b);              // same shape
    NodePtr add_rowvec(NodePtr a, NodePtr row);     // broadcast a 1xC row
    NodePtr add_const(NodePtr a, Mat c);
    NodePtr scale(NodePtr a, double s);
    NodePtr slice_rows(NodePtr a, int r0, int n);
    NodePtr slice_cols(NodePtr a, int c0, int n);
    NodePtr concat_cols(const std::vector<NodePtr>& parts);
    NodePtr concat_rows(const std::vector<NodePtr>& parts);
    NodePtr gather_rows(NodePtr table, std::vector<int> idx);
    NodePtr layer_norm(NodePtr a, NodePtr gain, NodePtr bias, double eps = 1e-5);
    NodePtr gelu(NodePtr a);
    NodePtr softmax_rows(NodePtr a);
    // Row t of the result (Tx1) is log softmax(logits row t) at targets[t].
    NodePtr gather_logprobs(NodePtr logits, std::vector<int> targets);
    NodePtr log_sigmoid(NodePtr a);  // elementwise
    NodePtr sum(NodePtr a);          // 1x1
    NodePtr mean(NodePtr a);         // 1x1

    // Seeds root with d(loss)/d(root) = seed and sweeps the tape. root must be 1x1.
    void backward(const NodePtr& root, double seed = 1.0);

    size_t size() const { return order_.size(); }

private:
    NodePtr make(Mat v, std::vector<NodePtr> parents);
    std::vector<NodePtr> order_;
    std::vector<std::pair<Parameter*, NodePtr>> bound_;
};

}  // namespace oocd::nn
