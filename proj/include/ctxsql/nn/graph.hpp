#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ctxsql::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// A trainable tensor with its gradient and Adam moments.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;
  Mat v;

  Eigen::Index size() const { return value.size(); }
};

class ParamStore {
 public:
  Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  std::vector<std::unique_ptr<Param>>& params() { return params_; }
  const std::vector<std::unique_ptr<Param>>& params() const { return params_; }

  void init_uniform(double scale, std::mt19937_64& rng);
  void zero_grad();
  std::size_t total_size() const;

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  void step(ParamStore& store);
  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  long t_ = 0;
};

using NodeId = int;

// Reverse-mode tape. Nodes are appended in topological order; backward()
// walks them in reverse. Parameter gradients accumulate into Param::grad.
class Graph {
 public:
  NodeId input(Mat value);
  NodeId param(Param& p);
  NodeId lookup(Param& table, int column);
  NodeId mean_lookup(Param& table, const std::vector<int>& columns);

  NodeId linear(Param& w, NodeId x);               // W x
  NodeId affine(Param& w, NodeId x, Param& b);     // W x + b
  NodeId linear_t(Param& w, NodeId x);             // W^T x
  NodeId add(NodeId a, NodeId b);
  NodeId cmul(NodeId a, NodeId b);
  NodeId mask(NodeId a, const Mat& m);             // a * m (constant), for dropout
  NodeId scale(NodeId a, double s);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId concat(const std::vector<NodeId>& xs);
  NodeId slice(NodeId a, Eigen::Index offset, Eigen::Index length);
  // One LSTM step; `state` is [h; c] and so is the result.
  NodeId lstm(Param& w, Param& b, NodeId x, NodeId state);
  NodeId columns(const std::vector<NodeId>& xs);   // stacks column vectors into D x N
  NodeId mat_t_vec(NodeId m, NodeId u);            // M^T u
  NodeId mat_vec(NodeId m, NodeId a);              // M a
  NodeId softmax(NodeId a);
  // result[g] = log sum_{i in groups[g]} exp(s[i])
  NodeId group_logsumexp(NodeId s, const std::vector<std::vector<int>>& groups);
  NodeId neg_log_softmax(NodeId z, int target);    // scalar
  NodeId sum(const std::vector<NodeId>& scalars);

  const Mat& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  double scalar(NodeId id) const { return value(id)(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  void backward(NodeId root);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;

  NodeId push(Mat value, std::function<void()> back = nullptr);
  Mat& grad(NodeId id);
  bool has_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() > 0; }
  const Mat& out_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
};

// Numerically stable softmax and log-sum-exp over a vector.
Vec softmax(const Vec& z);
double logsumexp(const Vec& z);

}  // namespace ctxsql::nn
