#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxmhe/mhe.hpp"

namespace ctxmhe {

/// Componentwise positivity map from raw network outputs to MHE weights:
/// softplus + floor for the 24 diagonal entries, scaled sigmoid for gamma.
struct ThetaMapping {
  double eps = 1e-4;
  double eps_gamma = 1e-3;

  MheWeights map(const Eigen::VectorXd& raw) const;
  /// Elementwise derivative d theta_i / d raw_i.
  Eigen::VectorXd jacobian_diag(const Eigen::VectorXd& raw) const;
};

double softplus(double z);
double softplus_inverse(double y);
double sigmoid(double z);

/// Fully connected 6-30-30-25 network, rectifier hidden activations,
/// identity output. 1975 parameters.
class WeightNet {
 public:
  static constexpr int kInput = 6;
  static constexpr int kHidden = 30;
  static constexpr int kOutput = 25;

  struct Cache {
    Eigen::VectorXd input, z1, h1, z2, h2;
  };

  struct Grads {
    Eigen::MatrixXd w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;
  };

  WeightNet();

  /// Uniform(+-init_scale) weights; output bias taken from `output_bias`.
  static WeightNet initialize(std::uint64_t seed, const Eigen::VectorXd& output_bias,
                              double init_scale = 0.05);

  Eigen::VectorXd forward_raw(const Eigen::VectorXd& features, Cache* cache = nullptr) const;
  Grads backward(const Cache& cache, const Eigen::VectorXd& grad_output) const;

  int parameter_count() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& params);

  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
};

/// Maps input features to validated MHE weights.
MheWeights net_forward(const WeightNet& net, const ThetaMapping& mapping, const Vec6& features);

class AdamOptimizer {
 public:
  AdamOptimizer(int dim, double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  /// In-place update of a flat parameter vector.
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  int updates() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  Eigen::VectorXd m_, v_;
};

struct CheckpointMetadata {
  int context_id = -1;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;
  bool converged = false;
  int episodes = 0;
  int skipped_updates = 0;
};

struct Checkpoint {
  WeightNet net;
  ThetaMapping mapping;
  CheckpointMetadata metadata;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ctxmhe
