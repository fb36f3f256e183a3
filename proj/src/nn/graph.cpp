#include "ctxsql/nn/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace ctxsql::nn {

Param& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (find(name)) throw std::logic_error("duplicate parameter " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  p->m = Mat::Zero(rows, cols);
  p->v = Mat::Zero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

void ParamStore::init_uniform(double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& p : params_) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = dist(rng);
  }
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void Adam::step(ParamStore& store) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& p : store.params()) {
    p->m = config_.beta1 * p->m + (1.0 - config_.beta1) * p->grad;
    p->v = config_.beta2 * p->v + (1.0 - config_.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= config_.lr * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + config_.eps);
  }
}

Vec softmax(const Vec& z) {
  Vec e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

double logsumexp(const Vec& z) {
  double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

NodeId Graph::push(Mat value, std::function<void()> back) {
  nodes_.push_back({std::move(value), Mat(), std::move(back)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

Mat& Graph::grad(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

NodeId Graph::input(Mat value) { return push(std::move(value)); }

NodeId Graph::param(Param& p) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(p.value, [this, self, &p] { p.grad += out_grad(self); });
}

NodeId Graph::lookup(Param& table, int column) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(table.value.col(column), [this, self, &table, column] { table.grad.col(column) += out_grad(self); });
}

NodeId Graph::mean_lookup(Param& table, const std::vector<int>& cols) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  Vec v = Vec::Zero(table.value.rows());
  for (int c : cols) v += table.value.col(c);
  const double inv = 1.0 / static_cast<double>(cols.size());
  v *= inv;
  return push(v, [this, self, &table, cols, inv] {
    for (int c : cols) table.grad.col(c) += inv * out_grad(self);
  });
}

NodeId Graph::linear(Param& w, NodeId x) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(w.value * value(x), [this, self, &w, x] {
    const Mat& g = out_grad(self);
    w.grad.noalias() += g * value(x).transpose();
    grad(x).noalias() += w.value.transpose() * g;
  });
}

NodeId Graph::affine(Param& w, NodeId x, Param& b) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  Mat v = b.value;
  v.noalias() += w.value * value(x);
  return push(std::move(v), [this, self, &w, &b, x] {
    const Mat& g = out_grad(self);
    w.grad.noalias() += g * value(x).transpose();
    b.grad += g;
    grad(x).noalias() += w.value.transpose() * g;
  });
}

NodeId Graph::linear_t(Param& w, NodeId x) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(w.value.transpose() * value(x), [this, self, &w, x] {
    const Mat& g = out_grad(self);
    w.grad.noalias() += value(x) * g.transpose();
    grad(x).noalias() += w.value * g;
  });
}

NodeId Graph::add(NodeId a, NodeId b) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(value(a) + value(b), [this, self, a, b] {
    grad(a) += out_grad(self);
    grad(b) += out_grad(self);
  });
}

NodeId Graph::cmul(NodeId a, NodeId b) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(value(a).cwiseProduct(value(b)), [this, self, a, b] {
    grad(a) += out_grad(self).cwiseProduct(value(b));
    grad(b) += out_grad(self).cwiseProduct(value(a));
  });
}

NodeId Graph::mask(NodeId a, const Mat& m) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(value(a).cwiseProduct(m), [this, self, a, m] { grad(a) += out_grad(self).cwiseProduct(m); });
}

NodeId Graph::scale(NodeId a, double s) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(value(a) * s, [this, self, a, s] { grad(a) += s * out_grad(self); });
}

NodeId Graph::tanh(NodeId a) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(value(a).array().tanh().matrix(), [this, self, a] {
    grad(a).array() += out_grad(self).array() * (1.0 - value(self).array().square());
  });
}

NodeId Graph::sigmoid(NodeId a) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  Mat v = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
  return push(std::move(v), [this, self, a] {
    grad(a).array() += out_grad(self).array() * value(self).array() * (1.0 - value(self).array());
  });
}

NodeId Graph::concat(const std::vector<NodeId>& xs) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  Eigen::Index n = 0;
  for (NodeId x : xs) n += value(x).rows();
  Mat v(n, 1);
  Eigen::Index off = 0;
  for (NodeId x : xs) {
    v.block(off, 0, value(x).rows(), 1) = value(x);
    off += value(x).rows();
  }
  return push(std::move(v), [this, self, xs] {
    Eigen::Index o = 0;
    for (NodeId x : xs) {
      Eigen::Index r = value(x).rows();
      grad(x) += out_grad(self).block(o, 0, r, 1);
      o += r;
    }
  });
}

NodeId Graph::slice(NodeId a, Eigen::Index offset, Eigen::Index length) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(value(a).block(offset, 0, length, 1),
              [this, self, a, offset, length] { grad(a).block(offset, 0, length, 1) += out_grad(self); });
}

NodeId Graph::lstm(Param& w, Param& b, NodeId x, NodeId state) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  const Eigen::Index h = value(state).rows() / 2;
  const Eigen::Index in = value(x).rows();
  Vec xh(in + h);
  xh.head(in) = value(x);
  xh.tail(h) = value(state).topRows(h);
  Vec gates = b.value;
  gates.noalias() += w.value * xh;
  // gate order: input, forget, output, candidate
  Vec act(4 * h);
  act.head(3 * h) = (1.0 / (1.0 + (-gates.head(3 * h).array()).exp())).matrix();
  act.tail(h) = gates.tail(h).array().tanh().matrix();
  const Vec c_prev = value(state).bottomRows(h);
  Vec c = act.segment(h, h).cwiseProduct(c_prev) + act.head(h).cwiseProduct(act.tail(h));
  Vec tc = c.array().tanh().matrix();
  Vec out(2 * h);
  out.head(h) = act.segment(2 * h, h).cwiseProduct(tc);
  out.tail(h) = c;
  return push(out, [this, self, &w, &b, x, state, h, in, xh, act, c_prev, tc] {
    const Mat& g = out_grad(self);
    const Vec gh = g.topRows(h);
    Vec gc = g.bottomRows(h);
    const auto i = act.head(h).array();
    const auto f = act.segment(h, h).array();
    const auto o = act.segment(2 * h, h).array();
    const auto cand = act.tail(h).array();
    gc.array() += gh.array() * o * (1.0 - tc.array().square());
    Vec dg(4 * h);
    dg.head(h) = (gc.array() * cand * i * (1.0 - i)).matrix();
    dg.segment(h, h) = (gc.array() * c_prev.array() * f * (1.0 - f)).matrix();
    dg.segment(2 * h, h) = (gh.array() * tc.array() * o * (1.0 - o)).matrix();
    dg.tail(h) = (gc.array() * i * (1.0 - cand.square())).matrix();
    w.grad.noalias() += dg * xh.transpose();
    b.grad += dg;
    Vec dxh = w.value.transpose() * dg;
    grad(x) += dxh.head(in);
    Mat& gs = grad(state);
    gs.topRows(h) += dxh.tail(h);
    gs.bottomRows(h) += (gc.array() * f).matrix();
  });
}

NodeId Graph::columns(const std::vector<NodeId>& xs) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  Mat v(value(xs.front()).rows(), static_cast<Eigen::Index>(xs.size()));
  for (std::size_t k = 0; k < xs.size(); ++k) v.col(static_cast<Eigen::Index>(k)) = value(xs[k]);
  return push(std::move(v), [this, self, xs] {
    for (std::size_t k = 0; k < xs.size(); ++k) grad(xs[k]) += out_grad(self).col(static_cast<Eigen::Index>(k));
  });
}

NodeId Graph::mat_t_vec(NodeId m, NodeId u) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(value(m).transpose() * value(u), [this, self, m, u] {
    const Mat& g = out_grad(self);
    grad(m).noalias() += value(u) * g.transpose();
    grad(u).noalias() += value(m) * g;
  });
}

NodeId Graph::mat_vec(NodeId m, NodeId a) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(value(m) * value(a), [this, self, m, a] {
    const Mat& g = out_grad(self);
    grad(m).noalias() += g * value(a).transpose();
    grad(a).noalias() += value(m).transpose() * g;
  });
}

NodeId Graph::softmax(NodeId a) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  return push(nn::softmax(value(a)), [this, self, a] {
    const Mat& g = out_grad(self);
    const Mat& p = value(self);
    double dot = g.cwiseProduct(p).sum();
    grad(a).array() += p.array() * (g.array() - dot);
  });
}

NodeId Graph::group_logsumexp(NodeId s, const std::vector<std::vector<int>>& groups) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  Vec v(static_cast<Eigen::Index>(groups.size()));
  const Mat& sv = value(s);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    Vec sel(static_cast<Eigen::Index>(groups[k].size()));
    for (std::size_t j = 0; j < groups[k].size(); ++j) sel(static_cast<Eigen::Index>(j)) = sv(groups[k][j], 0);
    v(static_cast<Eigen::Index>(k)) = logsumexp(sel);
  }
  return push(v, [this, self, s, groups] {
    const Mat& g = out_grad(self);
    const Mat& sv2 = value(s);
    Mat& gs = grad(s);
    for (std::size_t k = 0; k < groups.size(); ++k) {
      double lse = value(self)(static_cast<Eigen::Index>(k), 0);
      for (int j : groups[k]) gs(j, 0) += g(static_cast<Eigen::Index>(k), 0) * std::exp(sv2(j, 0) - lse);
    }
  });
}

NodeId Graph::neg_log_softmax(NodeId z, int target) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  const Vec zv = value(z);
  double lse = logsumexp(zv);
  Mat v(1, 1);
  v(0, 0) = lse - zv(target);
  return push(v, [this, self, z, target, lse] {
    double g = out_grad(self)(0, 0);
    Mat& gz = grad(z);
    gz.array() += g * (value(z).array() - lse).exp();
    gz(target, 0) -= g;
  });
}

NodeId Graph::sum(const std::vector<NodeId>& scalars) {
  NodeId self = static_cast<NodeId>(nodes_.size());
  Mat v = Mat::Zero(1, 1);
  for (NodeId s : scalars) v(0, 0) += scalar(s);
  return push(v, [this, self, scalars] {
    for (NodeId s : scalars) grad(s)(0, 0) += out_grad(self)(0, 0);
  });
}

void Graph::backward(NodeId root) {
  grad(root).setOnes();
  for (std::size_t k = static_cast<std::size_t>(root) + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (n.back && n.grad.size() > 0) n.back();
  }
}

}  // namespace ctxsql::nn
