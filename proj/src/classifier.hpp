#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace fvslide {

// amil: gated-by-tanh attention pooling. mlp: mean pooling, no attention.
enum class HeadType { amil, mlp };

struct ModelShape {
  int input_dim = 0;
  int hidden = 256;
  int attn_dim = 128;
  int n_classes = 2;
  HeadType head = HeadType::amil;

  int effective_attn_dim() const { return head == HeadType::amil ? attn_dim : 0; }
  std::size_t parameter_count() const;
};

using MatMap = Eigen::Map<Matrix>;
using ConstMatMap = Eigen::Map<const Matrix>;
using VecMap = Eigen::Map<Vector>;
using ConstVecMap = Eigen::Map<const Vector>;

// Parameters live in one flat buffer:
// embed_W | embed_b | attn_V | attn_w | head_W | head_b.
class AmilModel {
 public:
  AmilModel() = default;
  explicit AmilModel(const ModelShape& shape);

  // Linear layers drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static AmilModel initialized(const ModelShape& shape, Rng& rng);

  const ModelShape& shape() const { return shape_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  ConstMatMap embed_W() const { return cmat(off_.embed_W, shape_.hidden, shape_.input_dim); }
  ConstVecMap embed_b() const { return cvec(off_.embed_b, shape_.hidden); }
  ConstMatMap attn_V() const { return cmat(off_.attn_V, shape_.effective_attn_dim(), shape_.hidden); }
  ConstVecMap attn_w() const { return cvec(off_.attn_w, shape_.effective_attn_dim()); }
  ConstMatMap head_W() const { return cmat(off_.head_W, shape_.n_classes, shape_.hidden); }
  ConstVecMap head_b() const { return cvec(off_.head_b, shape_.n_classes); }

  struct Offsets {
    std::size_t embed_W = 0, embed_b = 0, attn_V = 0, attn_w = 0, head_W = 0, head_b = 0, total = 0;
  };
  const Offsets& offsets() const { return off_; }

 private:
  ConstMatMap cmat(std::size_t off, int r, int c) const { return ConstMatMap(params_.data() + off, r, c); }
  ConstVecMap cvec(std::size_t off, int n) const { return ConstVecMap(params_.data() + off, n); }

  ModelShape shape_;
  Offsets off_;
  std::vector<double> params_;
};

struct ForwardResult {
  Vector logits;
  Vector attention;  // k weights summing to one
};

ForwardResult forward(const AmilModel& model, const Matrix& bag);
Vector predict_proba(const AmilModel& model, const Matrix& bag);

// One training example after augmentation and mixup: the loss is
// lambda * CE(target_a) + (1 - lambda) * CE(target_b) on the mixed bag.
struct MixedSample {
  Matrix bag;
  int target_a = 0;
  int target_b = 0;
  double lambda = 1.0;
  std::string slide_id;
};

struct LossAndGrads {
  double loss = 0.0;
  std::vector<double> grads;  // same layout as AmilModel::params()
};

// Mean softmax cross-entropy over the batch with exact reverse-mode gradients.
LossAndGrads loss_and_grads(const AmilModel& model, std::span<const MixedSample> batch);

struct AdamWConfig {
  double lr = 0.001;
  double weight_decay = 0.0001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  static AdamWState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
};

// Decoupled decay (w *= 1 - lr*wd) followed by the bias-corrected Adam step.
void adamw_step(AmilModel& model, std::span<const double> grads, AdamWState& state,
                const AdamWConfig& config);

enum class JitterDistribution { uniform, gaussian };

struct TrainConfig {
  AdamWConfig optimizer;
  int epochs = 60;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double scale_low = 0.9;
  double scale_high = 1.0;
  bool scale_per_instance = false;
  double jitter_level = 0.01;
  JitterDistribution jitter_distribution = JitterDistribution::uniform;
  double mixup_alpha = 0.2;
  int hidden = 256;
  int attn_dim = 128;
  HeadType head = HeadType::amil;

  void validate() const;
};

Matrix augment_bag(const Matrix& bag, const TrainConfig& config, Rng& rng);

Matrix mix_bags(const Matrix& a, const Matrix& b, double lambda);

struct MixupResult {
  Matrix bag;
  double lambda = 1.0;
};
// lambda ~ Beta(alpha, alpha); bags are mixed row by row.
MixupResult mixup_sample(const Matrix& a, const Matrix& b, double alpha, Rng& rng);

struct TrainedClassifier {
  AmilModel model;
  int epochs_run = 0;
  int best_epoch = 0;  // 0 = the initial model
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
};

TrainedClassifier train(const Dataset& dataset, const TrainConfig& config);

MetricsReport evaluate(const AmilModel& model, const Dataset& dataset, Split split);

void write_model(const TrainedClassifier& trained, const std::filesystem::path& path);
TrainedClassifier read_model(const std::filesystem::path& path);

}  // namespace fvslide
