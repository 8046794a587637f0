#include "classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "binary_io.hpp"
#include "error.hpp"
#include "log.hpp"

namespace fvslide {

std::size_t ModelShape::parameter_count() const {
  const std::size_t h = hidden, in = input_dim, a = effective_attn_dim(), c = n_classes;
  return h * in + h + a * h + a + c * h + c;
}

AmilModel::AmilModel(const ModelShape& shape) : shape_(shape) {
  if (shape.input_dim < 1 || shape.hidden < 1 || shape.n_classes < 2)
    fail("model: input_dim and hidden must be >= 1, n_classes >= 2");
  if (shape.head == HeadType::amil && shape.attn_dim < 1) fail("model: attn_dim must be >= 1");
  const std::size_t h = shape.hidden, in = shape.input_dim, a = shape.effective_attn_dim(),
                    c = shape.n_classes;
  off_.embed_W = 0;
  off_.embed_b = off_.embed_W + h * in;
  off_.attn_V = off_.embed_b + h;
  off_.attn_w = off_.attn_V + a * h;
  off_.head_W = off_.attn_w + a;
  off_.head_b = off_.head_W + c * h;
  off_.total = off_.head_b + c;
  params_.assign(off_.total, 0.0);
}

AmilModel AmilModel::initialized(const ModelShape& shape, Rng& rng) {
  AmilModel model(shape);
  auto fill = [&](std::size_t begin, std::size_t end, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = begin; i < end; ++i) model.params_[i] = rng.uniform(-bound, bound);
  };
  const auto& o = model.off_;
  fill(o.embed_W, o.attn_V, shape.input_dim);
  fill(o.attn_V, o.attn_w, shape.hidden);
  fill(o.attn_w, o.head_W, std::max(1, shape.effective_attn_dim()));
  fill(o.head_W, o.total, shape.hidden);
  return model;
}

namespace {

struct Trace {
  Matrix pre;     // k x hidden
  Matrix h;       // relu(pre)
  Matrix t;       // k x attn, tanh(h V^T)
  Vector a;       // attention
  Vector z;       // pooled
  Vector logits;
};

Trace run_forward(const AmilModel& model, const Matrix& bag) {
  const auto& s = model.shape();
  if (bag.cols() != s.input_dim)
    fail("forward: bag instance length " + std::to_string(bag.cols()) + " != model input " +
         std::to_string(s.input_dim));
  if (bag.rows() < 1) fail("forward: empty bag");
  Trace tr;
  tr.pre = bag * model.embed_W().transpose();
  tr.pre.rowwise() += model.embed_b().transpose();
  tr.h = tr.pre.cwiseMax(0.0);
  const Eigen::Index k = bag.rows();
  if (s.head == HeadType::amil) {
    tr.t = (tr.h * model.attn_V().transpose()).array().tanh().matrix();
    Vector e = tr.t * model.attn_w();
    const double mx = e.maxCoeff();
    tr.a = (e.array() - mx).exp().matrix();
    tr.a /= tr.a.sum();
  } else {
    tr.a = Vector::Constant(k, 1.0 / static_cast<double>(k));
  }
  tr.z = tr.h.transpose() * tr.a;
  tr.logits = model.head_W() * tr.z + model.head_b();
  return tr;
}

Vector softmax(const Vector& logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

}  // namespace

ForwardResult forward(const AmilModel& model, const Matrix& bag) {
  Trace tr = run_forward(model, bag);
  return {std::move(tr.logits), std::move(tr.a)};
}

Vector predict_proba(const AmilModel& model, const Matrix& bag) {
  return softmax(run_forward(model, bag).logits);
}

LossAndGrads loss_and_grads(const AmilModel& model, std::span<const MixedSample> batch) {
  if (batch.empty()) fail("loss: empty batch");
  const auto& s = model.shape();
  const auto& o = model.offsets();
  LossAndGrads out;
  out.grads.assign(o.total, 0.0);
  MatMap dEmbedW(out.grads.data() + o.embed_W, s.hidden, s.input_dim);
  VecMap dEmbedB(out.grads.data() + o.embed_b, s.hidden);
  MatMap dAttnV(out.grads.data() + o.attn_V, s.effective_attn_dim(), s.hidden);
  VecMap dAttnW(out.grads.data() + o.attn_w, s.effective_attn_dim());
  MatMap dHeadW(out.grads.data() + o.head_W, s.n_classes, s.hidden);
  VecMap dHeadB(out.grads.data() + o.head_b, s.n_classes);

  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& sample : batch) {
    if (sample.target_a < 0 || sample.target_a >= s.n_classes || sample.target_b < 0 ||
        sample.target_b >= s.n_classes)
      fail("loss: target out of range for slide '" + sample.slide_id + "'");
    if (!(sample.lambda >= 0.0 && sample.lambda <= 1.0))
      fail("loss: mixup weight outside [0, 1] for slide '" + sample.slide_id + "'");

    const Trace tr = run_forward(model, sample.bag);
    const double mx = tr.logits.maxCoeff();
    const double lse = mx + std::log((tr.logits.array() - mx).exp().sum());
    const double lam = sample.lambda;
    double loss = lam * (lse - tr.logits[sample.target_a]);
    if (lam < 1.0) loss += (1.0 - lam) * (lse - tr.logits[sample.target_b]);
    if (!std::isfinite(loss)) fail("loss: non-finite loss on slide '" + sample.slide_id + "'");
    out.loss += scale * loss;

    Vector g = softmax(tr.logits);
    g[sample.target_a] -= lam;
    g[sample.target_b] -= 1.0 - lam;
    g *= scale;

    dHeadW.noalias() += g * tr.z.transpose();
    dHeadB += g;
    const Vector dz = model.head_W().transpose() * g;

    Matrix dH = tr.a * dz.transpose();
    if (s.head == HeadType::amil) {
      const Vector da = tr.h * dz;
      const Vector de = tr.a.cwiseProduct((da.array() - tr.a.dot(da)).matrix());
      dAttnW.noalias() += tr.t.transpose() * de;
      const Matrix dU = ((de * model.attn_w().transpose()).array() * (1.0 - tr.t.array().square())).matrix();
      dAttnV.noalias() += dU.transpose() * tr.h;
      dH.noalias() += dU * model.attn_V();
    }
    const Matrix dPre = (dH.array() * (tr.pre.array() > 0.0).cast<double>()).matrix();
    dEmbedW.noalias() += dPre.transpose() * sample.bag;
    dEmbedB += dPre.colwise().sum().transpose();
  }
  return out;
}

void adamw_step(AmilModel& model, std::span<const double> grads, AdamWState& state,
                const AdamWConfig& config) {
  auto& p = model.params();
  if (grads.size() != p.size() || state.m.size() != p.size() || state.v.size() != p.size())
    fail("adamw: state shape does not match the model");
  ++state.step;
  const double decay = 1.0 - config.lr * config.weight_decay;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    p[i] *= decay;
    p[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

void TrainConfig::validate() const {
  if (!(optimizer.lr > 0.0)) fail("train: lr must be > 0");
  if (!(optimizer.weight_decay >= 0.0)) fail("train: weight_decay must be >= 0");
  if (epochs < 0) fail("train: epochs must be >= 0");
  if (batch_size < 1) fail("train: batch_size must be >= 1");
  if (!(scale_low > 0.0 && scale_low <= scale_high)) fail("train: need 0 < scale_low <= scale_high");
  if (!(jitter_level >= 0.0)) fail("train: jitter_level must be >= 0");
  if (!(mixup_alpha > 0.0)) fail("train: mixup_alpha must be > 0");
  if (hidden < 1 || (head == HeadType::amil && attn_dim < 1)) fail("train: hidden/attn_dim must be >= 1");
}

Matrix augment_bag(const Matrix& bag, const TrainConfig& config, Rng& rng) {
  Matrix out = bag;
  if (config.scale_per_instance) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) *= rng.uniform(config.scale_low, config.scale_high);
  } else {
    out *= config.scale_low == config.scale_high ? config.scale_low
                                                 : rng.uniform(config.scale_low, config.scale_high);
  }
  if (config.jitter_level > 0.0) {
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      out.data()[i] += config.jitter_distribution == JitterDistribution::uniform
                           ? rng.uniform(-config.jitter_level, config.jitter_level)
                           : config.jitter_level * rng.normal();
    }
  }
  return out;
}

Matrix mix_bags(const Matrix& a, const Matrix& b, double lambda) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) fail("mixup: bag shapes differ");
  if (lambda == 1.0) return a;
  if (lambda == 0.0) return b;
  return lambda * a + (1.0 - lambda) * b;
}

MixupResult mixup_sample(const Matrix& a, const Matrix& b, double alpha, Rng& rng) {
  const double lambda = rng.beta(alpha, alpha);
  return {mix_bags(a, b, lambda), lambda};
}

namespace {

double accuracy_on(const AmilModel& model, const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::size_t correct = 0;
  for (auto i : idx) {
    Eigen::Index pred = 0;
    forward(model, ds.representations[i].fvs).logits.maxCoeff(&pred);
    if (pred == ds.labels[i]) ++correct;
  }
  return idx.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

TrainedClassifier train(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  dataset.validate();
  const auto train_idx = dataset.indices(Split::train);
  const auto val_idx = dataset.indices(Split::val);
  if (train_idx.empty()) fail("train: train split is empty");
  std::set<int> classes;
  for (auto i : train_idx) classes.insert(dataset.labels[i]);
  if (classes.size() < 2) fail("train: train split contains a single class");

  ModelShape shape;
  shape.input_dim = static_cast<int>(dataset.representations.front().fv_length());
  shape.hidden = config.hidden;
  shape.attn_dim = config.attn_dim;
  shape.n_classes = dataset.n_classes;
  shape.head = config.head;

  Rng root(config.seed);
  Rng init_rng = root.split(0);
  Rng rng = root.split(1);

  TrainedClassifier result;
  result.model = AmilModel::initialized(shape, init_rng);
  if (config.epochs == 0) return result;
  if (val_idx.empty()) log::warn("train: no validation slides, keeping the final epoch's model");

  AmilModel model = result.model;
  AdamWState state = AdamWState::zeros(model.params().size());
  double best_val = -1.0;
  std::vector<std::size_t> order = train_idx;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::size_t b = end - start;
      std::vector<Matrix> augmented;
      augmented.reserve(b);
      for (std::size_t i = start; i < end; ++i)
        augmented.push_back(augment_bag(dataset.representations[order[i]].fvs, config, rng));
      std::vector<std::size_t> partner(b);
      std::iota(partner.begin(), partner.end(), std::size_t{0});
      rng.shuffle(partner);

      std::vector<MixedSample> batch(b);
      for (std::size_t i = 0; i < b; ++i) {
        const auto mixed = mixup_sample(augmented[i], augmented[partner[i]], config.mixup_alpha, rng);
        batch[i].bag = mixed.bag;
        batch[i].lambda = mixed.lambda;
        batch[i].target_a = dataset.labels[order[start + i]];
        batch[i].target_b = dataset.labels[order[start + partner[i]]];
        batch[i].slide_id = dataset.representations[order[start + i]].slide_id;
      }
      const auto lg = loss_and_grads(model, batch);
      epoch_loss += lg.loss * static_cast<double>(b);
      adamw_step(model, lg.grads, state, config.optimizer);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) fail("train: non-finite loss at epoch " + std::to_string(epoch));
    result.train_loss.push_back(epoch_loss);

    const double val_acc = val_idx.empty() ? 0.0 : accuracy_on(model, dataset, val_idx);
    result.val_accuracy.push_back(val_acc);
    if (val_acc >= best_val) {
      best_val = val_acc;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  result.epochs_run = config.epochs;
  return result;
}

MetricsReport evaluate(const AmilModel& model, const Dataset& dataset, Split split) {
  const auto idx = dataset.indices(split);
  if (idx.empty()) fail(std::string("evaluate: split '") + split_name(split) + "' is empty");
  Matrix probs(static_cast<Eigen::Index>(idx.size()), dataset.n_classes);
  std::vector<int> labels;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    probs.row(static_cast<Eigen::Index>(r)) = predict_proba(model, dataset.representations[idx[r]].fvs).transpose();
    labels.push_back(dataset.labels[idx[r]]);
  }
  return compute_metrics(probs, labels, dataset.n_classes, split_name(split));
}

namespace {

constexpr std::uint32_t kModelVersion = 1;

void put_tensor(std::string& out, const double* data, std::initializer_list<std::size_t> dims) {
  binio::put_u32(out, static_cast<std::uint32_t>(dims.size()));
  std::size_t n = 1;
  for (auto d : dims) {
    binio::put_u32(out, static_cast<std::uint32_t>(d));
    n *= d;
  }
  for (std::size_t i = 0; i < n; ++i) binio::put_f64(out, data[i]);
}

void get_tensor(binio::Reader& r, double* data, std::initializer_list<std::size_t> dims) {
  if (r.u32() != dims.size()) fail(r.context() + ": tensor rank mismatch");
  std::size_t n = 1;
  for (auto d : dims) {
    if (r.u32() != d) fail(r.context() + ": tensor shape mismatch");
    n *= d;
  }
  for (std::size_t i = 0; i < n; ++i) data[i] = r.f64();
}

}  // namespace

void write_model(const TrainedClassifier& trained, const std::filesystem::path& path) {
  const auto& m = trained.model;
  const auto& s = m.shape();
  const auto& o = m.offsets();
  const std::size_t h = s.hidden, in = s.input_dim, a = s.effective_attn_dim(), c = s.n_classes;
  std::string out;
  binio::put_magic(out, "WSMD");
  binio::put_u32(out, kModelVersion);
  binio::put_u32(out, s.head == HeadType::amil ? 0u : 1u);
  binio::put_u32(out, static_cast<std::uint32_t>(s.input_dim));
  binio::put_u32(out, static_cast<std::uint32_t>(s.hidden));
  binio::put_u32(out, static_cast<std::uint32_t>(s.attn_dim));
  binio::put_u32(out, static_cast<std::uint32_t>(s.n_classes));
  const double* p = m.params().data();
  put_tensor(out, p + o.embed_W, {h, in});
  put_tensor(out, p + o.embed_b, {h});
  put_tensor(out, p + o.attn_V, {a, h});
  put_tensor(out, p + o.attn_w, {a});
  put_tensor(out, p + o.head_W, {c, h});
  put_tensor(out, p + o.head_b, {c});
  binio::put_u32(out, static_cast<std::uint32_t>(trained.epochs_run));
  binio::put_u32(out, static_cast<std::uint32_t>(trained.best_epoch));
  put_tensor(out, trained.train_loss.data(), {trained.train_loss.size()});
  put_tensor(out, trained.val_accuracy.data(), {trained.val_accuracy.size()});
  binio::write_file(path, out);
}

TrainedClassifier read_model(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  binio::Reader r(bytes, path.string());
  if (r.remaining() < 4 || r.take(4) != "WSMD") fail(path.string() + ": not a model file");
  if (r.u32() != kModelVersion) fail(path.string() + ": unsupported version");
  ModelShape s;
  const auto head = r.u32();
  if (head > 1) fail(path.string() + ": unknown head type");
  s.head = head == 0 ? HeadType::amil : HeadType::mlp;
  s.input_dim = static_cast<int>(r.u32());
  s.hidden = static_cast<int>(r.u32());
  s.attn_dim = static_cast<int>(r.u32());
  s.n_classes = static_cast<int>(r.u32());
  TrainedClassifier t;
  t.model = AmilModel(s);
  const auto& o = t.model.offsets();
  const std::size_t h = s.hidden, in = s.input_dim, a = s.effective_attn_dim(), c = s.n_classes;
  double* p = t.model.params().data();
  get_tensor(r, p + o.embed_W, {h, in});
  get_tensor(r, p + o.embed_b, {h});
  get_tensor(r, p + o.attn_V, {a, h});
  get_tensor(r, p + o.attn_w, {a});
  get_tensor(r, p + o.head_W, {c, h});
  get_tensor(r, p + o.head_b, {c});
  t.epochs_run = static_cast<int>(r.u32());
  t.best_epoch = static_cast<int>(r.u32());
  for (auto* series : {&t.train_loss, &t.val_accuracy}) {
    if (r.u32() != 1) fail(path.string() + ": bad history tensor");
    series->resize(r.u32());
    for (auto& v : *series) v = r.f64();
  }
  if (r.remaining() != 0) fail(path.string() + ": trailing bytes");
  for (double v : t.model.params())
    if (!std::isfinite(v)) fail(path.string() + ": non-finite parameter");
  return t;
}

}  // namespace fvslide
