#include "ctxmhe/weight_net.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ctxmhe/rng.hpp"
#include "json.hpp"

namespace ctxmhe {

double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

double softplus_inverse(double y) {
  if (y <= 0.0) throw std::invalid_argument("softplus_inverse: y must be > 0");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

MheWeights ThetaMapping::map(const Eigen::VectorXd& raw) const {
  if (raw.size() != 25) throw std::invalid_argument("ThetaMapping: raw must have 25 entries");
  Eigen::VectorXd theta(25);
  for (int i = 0; i < 24; ++i) theta(i) = softplus(raw(i)) + eps;
  // Floor keeps gamma strictly above eps_gamma even when sigmoid underflows.
  theta(24) = eps_gamma + (1.0 - eps_gamma) * std::max(sigmoid(raw(24)), 1e-15);
  return MheWeights::from_theta(theta);
}

Eigen::VectorXd ThetaMapping::jacobian_diag(const Eigen::VectorXd& raw) const {
  Eigen::VectorXd d(25);
  for (int i = 0; i < 24; ++i) d(i) = sigmoid(raw(i));
  const double s = sigmoid(raw(24));
  d(24) = (1.0 - eps_gamma) * s * (1.0 - s);
  return d;
}

WeightNet::WeightNet()
    : w1(Eigen::MatrixXd::Zero(kHidden, kInput)),
      w2(Eigen::MatrixXd::Zero(kHidden, kHidden)),
      w3(Eigen::MatrixXd::Zero(kOutput, kHidden)),
      b1(Eigen::VectorXd::Zero(kHidden)),
      b2(Eigen::VectorXd::Zero(kHidden)),
      b3(Eigen::VectorXd::Zero(kOutput)) {}

WeightNet WeightNet::initialize(std::uint64_t seed, const Eigen::VectorXd& output_bias,
                                double init_scale) {
  if (output_bias.size() != kOutput)
    throw std::invalid_argument("WeightNet: output bias must have 25 entries");
  WeightNet net;
  Rng rng(mix_seed(seed, seed_tag::kNetInit));
  std::uniform_real_distribution<double> uni(-init_scale, init_scale);
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uni(rng);
  };
  fill(net.w1);
  fill(net.w2);
  fill(net.w3);
  net.b3 = output_bias;
  return net;
}

Eigen::VectorXd WeightNet::forward_raw(const Eigen::VectorXd& features, Cache* cache) const {
  if (features.size() != kInput)
    throw std::invalid_argument("WeightNet: expected 6 input features");
  const Eigen::VectorXd z1 = w1 * features + b1;
  const Eigen::VectorXd h1 = z1.cwiseMax(0.0);
  const Eigen::VectorXd z2 = w2 * h1 + b2;
  const Eigen::VectorXd h2 = z2.cwiseMax(0.0);
  Eigen::VectorXd out = w3 * h2 + b3;
  if (cache) {
    cache->input = features;
    cache->z1 = z1;
    cache->h1 = h1;
    cache->z2 = z2;
    cache->h2 = h2;
  }
  return out;
}

WeightNet::Grads WeightNet::backward(const Cache& cache, const Eigen::VectorXd& grad_output) const {
  Grads g;
  g.w3 = grad_output * cache.h2.transpose();
  g.b3 = grad_output;
  Eigen::VectorXd dh2 = w3.transpose() * grad_output;
  Eigen::VectorXd dz2 =
      (cache.z2.array() > 0.0).select(dh2.array(), 0.0).matrix();
  g.w2 = dz2 * cache.h1.transpose();
  g.b2 = dz2;
  Eigen::VectorXd dh1 = w2.transpose() * dz2;
  Eigen::VectorXd dz1 =
      (cache.z1.array() > 0.0).select(dh1.array(), 0.0).matrix();
  g.w1 = dz1 * cache.input.transpose();
  g.b1 = dz1;
  return g;
}

int WeightNet::parameter_count() const {
  return static_cast<int>(w1.size() + b1.size() + w2.size() + b2.size() + w3.size() +
                          b3.size());
}

Eigen::VectorXd WeightNet::flatten() const {
  Eigen::VectorXd p(parameter_count());
  int off = 0;
  auto put_m = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) p(off++) = m(i, j);
  };
  auto put_v = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) p(off++) = v(i);
  };
  put_m(w1);
  put_v(b1);
  put_m(w2);
  put_v(b2);
  put_m(w3);
  put_v(b3);
  return p;
}

void WeightNet::unflatten(const Eigen::VectorXd& params) {
  if (params.size() != parameter_count())
    throw std::invalid_argument("WeightNet: parameter vector size mismatch");
  int off = 0;
  auto get_m = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = params(off++);
  };
  auto get_v = [&](Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = params(off++);
  };
  get_m(w1);
  get_v(b1);
  get_m(w2);
  get_v(b2);
  get_m(w3);
  get_v(b3);
}

MheWeights net_forward(const WeightNet& net, const ThetaMapping& mapping, const Vec6& features) {
  if (!features.allFinite()) throw std::invalid_argument("net_forward: non-finite features");
  return mapping.map(net.forward_raw(features));
}

AdamOptimizer::AdamOptimizer(int dim, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw std::invalid_argument("AdamOptimizer: learning rate must be > 0");
  m_ = Eigen::VectorXd::Zero(dim);
  v_ = Eigen::VectorXd::Zero(dim);
}

void AdamOptimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("AdamOptimizer: dimension mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  params -= (lr_ / c1) * m_.cwiseQuotient(((v_ / c2).cwiseSqrt().array() + eps_).matrix());
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.size();
  if (rows == 0) return {};
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t jj = 0; jj < cols; ++jj) m(i, jj) = j.at(i).at(jj).get<double>();
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["architecture"] = {WeightNet::kInput, WeightNet::kHidden, WeightNet::kHidden,
                       WeightNet::kOutput};
  j["activation"] = "relu";
  j["layers"] = nlohmann::json::array();
  j["layers"].push_back({{"w", matrix_to_json(ckpt.net.w1)}, {"b", vector_to_json(ckpt.net.b1)}});
  j["layers"].push_back({{"w", matrix_to_json(ckpt.net.w2)}, {"b", vector_to_json(ckpt.net.b2)}});
  j["layers"].push_back({{"w", matrix_to_json(ckpt.net.w3)}, {"b", vector_to_json(ckpt.net.b3)}});
  j["mapping"] = {{"eps", ckpt.mapping.eps}, {"eps_gamma", ckpt.mapping.eps_gamma}};
  j["metadata"] = {{"context_id", ckpt.metadata.context_id},
                   {"seed", ckpt.metadata.seed},
                   {"loss_history", ckpt.metadata.loss_history},
                   {"converged", ckpt.metadata.converged},
                   {"episodes", ckpt.metadata.episodes},
                   {"skipped_updates", ckpt.metadata.skipped_updates}};
  return j.dump(2);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  const std::vector<int> arch = j.at("architecture").get<std::vector<int>>();
  if (arch != std::vector<int>{WeightNet::kInput, WeightNet::kHidden, WeightNet::kHidden,
                               WeightNet::kOutput})
    throw std::invalid_argument("checkpoint: unsupported architecture");
  Checkpoint c;
  c.net.w1 = matrix_from_json(j.at("layers").at(0).at("w"));
  c.net.b1 = vector_from_json(j.at("layers").at(0).at("b"));
  c.net.w2 = matrix_from_json(j.at("layers").at(1).at("w"));
  c.net.b2 = vector_from_json(j.at("layers").at(1).at("b"));
  c.net.w3 = matrix_from_json(j.at("layers").at(2).at("w"));
  c.net.b3 = vector_from_json(j.at("layers").at(2).at("b"));
  c.mapping.eps = j.at("mapping").at("eps").get<double>();
  c.mapping.eps_gamma = j.at("mapping").at("eps_gamma").get<double>();
  const auto& md = j.at("metadata");
  c.metadata.context_id = md.at("context_id").get<int>();
  c.metadata.seed = md.at("seed").get<std::uint64_t>();
  c.metadata.loss_history = md.at("loss_history").get<std::vector<double>>();
  c.metadata.converged = md.at("converged").get<bool>();
  c.metadata.episodes = md.at("episodes").get<int>();
  c.metadata.skipped_updates = md.at("skipped_updates").get<int>();
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f << checkpoint_to_json(ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return checkpoint_from_json(text);
}

}  // namespace ctxmhe
