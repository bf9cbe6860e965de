#pragma once

// The compressor network: an affine expansion of the mono input to c
// channels, a stack of S4D blocks conditioned on the effect controls through
// FiLM, an affine contraction back to one channel and a tanh limiter.
//
// Each block computes
//
//   h1  = prelu(a1, mix * x + mix_bias)
//   h2  = s4d(h1)                       (state carried across calls)
//   h3  = norm_scale * h2 + norm_shift  (inference-mode batch norm)
//   out = prelu(a2, gamma * h3 + beta) + x
//
// with (gamma, beta) produced per block from a shared control embedding.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "s4drc/diagnostics.hpp"
#include "s4drc/error.hpp"
#include "s4drc/ssm.hpp"
#include "s4drc/types.hpp"

namespace s4drc {

struct ModelConfig {
  Index num_blocks = 4;
  Index channels = 32;
  Index ssm_order = 4;
  Index control_dim = 2;
  Index control_embedding_dim = 32;
  std::vector<Index> control_hidden{16, 16};
  double sample_rate = 44100.0;

  void validate() const;
  /// "ssm-c32-f4" style name.
  std::string name() const;

  bool operator==(const ModelConfig&) const = default;
};

/// LA-2A front-panel controls, normalised: peak reduction in [0, 1] (panel
/// value x 0.01) and the compress/limit switch as 0 or 1.
struct ControlVector {
  double peak_reduction = 0.5;
  double limit_switch = 0.0;

  void validate() const;
  bool operator==(const ControlVector&) const = default;
};

/// Affine layer with an optional per-unit PReLU after it (empty = linear).
template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;
  Vector<Scalar> prelu;

  template <typename NewScalar>
  DenseLayer<NewScalar> cast() const {
    return {weight.template cast<NewScalar>(), bias.template cast<NewScalar>(),
            prelu.template cast<NewScalar>()};
  }
};

template <typename Scalar>
struct BlockWeights {
  Matrix<Scalar> mix_weight;  // c x c
  Vector<Scalar> mix_bias;
  Vector<Scalar> prelu1;
  SsmCoefficients<Scalar> ssm;
  Vector<Scalar> norm_scale;
  Vector<Scalar> norm_shift;
  Matrix<Scalar> film_weight;  // 2c x E; rows [0, c) give gamma, [c, 2c) beta
  Vector<Scalar> film_bias;
  Vector<Scalar> prelu2;

  template <typename NewScalar>
  BlockWeights<NewScalar> cast() const {
    return {mix_weight.template cast<NewScalar>(), mix_bias.template cast<NewScalar>(),
            prelu1.template cast<NewScalar>(),     ssm.template cast<NewScalar>(),
            norm_scale.template cast<NewScalar>(), norm_shift.template cast<NewScalar>(),
            film_weight.template cast<NewScalar>(), film_bias.template cast<NewScalar>(),
            prelu2.template cast<NewScalar>()};
  }
};

template <typename Scalar>
struct ModelWeights {
  ModelConfig config;
  Matrix<Scalar> expand_weight;  // c x 1
  Vector<Scalar> expand_bias;
  std::vector<BlockWeights<Scalar>> blocks;
  std::vector<DenseLayer<Scalar>> control_mlp;
  Matrix<Scalar> contract_weight;  // 1 x c
  Vector<Scalar> contract_bias;    // 1

  template <typename NewScalar>
  ModelWeights<NewScalar> cast() const {
    ModelWeights<NewScalar> out;
    out.config = config;
    out.expand_weight = expand_weight.template cast<NewScalar>();
    out.expand_bias = expand_bias.template cast<NewScalar>();
    for (const auto& b : blocks) out.blocks.push_back(b.template cast<NewScalar>());
    for (const auto& l : control_mlp) out.control_mlp.push_back(l.template cast<NewScalar>());
    out.contract_weight = contract_weight.template cast<NewScalar>();
    out.contract_bias = contract_bias.template cast<NewScalar>();
    return out;
  }
};

struct ModelState {
  std::vector<SsmState> blocks;

  static ModelState zeros(const ModelConfig& config) {
    ModelState st;
    st.blocks.assign(static_cast<std::size_t>(config.num_blocks),
                     SsmState::zeros(config.channels, config.ssm_order));
    return st;
  }

  bool matches(const ModelConfig& config) const {
    if (static_cast<Index>(blocks.size()) != config.num_blocks) return false;
    for (const auto& b : blocks) {
      if (b.x.rows() != config.channels || b.x.cols() != config.ssm_order) return false;
    }
    return true;
  }

  void reset() {
    for (auto& b : blocks) b.reset();
  }
};

/// Checks every shape against the config. Throws ShapeMismatch, NonFinite,
/// Unstable or InvalidArgument (zero normalisation scale).
template <typename Scalar>
void validate(const ModelWeights<Scalar>& w);

// ---------------------------------------------------------------------------
// Elementwise layers

template <typename DerivedA, typename DerivedX>
Signal<typename DerivedX::Scalar> prelu(const Eigen::MatrixBase<DerivedA>& a,
                                        const Eigen::MatrixBase<DerivedX>& x) {
  if (a.size() != x.rows()) throw Error(ErrorCode::DimensionMismatch, "prelu: slope count");
  Signal<typename DerivedX::Scalar> y = x;
  for (Index h = 0; h < y.rows(); ++h) {
    y.row(h) = y.row(h).cwiseMax(0) + a(h) * y.row(h).cwiseMin(0);
  }
  return y;
}

template <typename DerivedG, typename DerivedB, typename DerivedX>
Signal<typename DerivedX::Scalar> film(const Eigen::MatrixBase<DerivedG>& gamma,
                                       const Eigen::MatrixBase<DerivedB>& beta,
                                       const Eigen::MatrixBase<DerivedX>& x) {
  if (gamma.size() != x.rows() || beta.size() != x.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "film: gamma/beta length must equal channel count");
  }
  Signal<typename DerivedX::Scalar> y = x;
  y.array().colwise() *= gamma.derived().array();
  y.array().colwise() += beta.derived().array();
  return y;
}

namespace detail {

template <typename Scalar>
void prelu_inplace(const Vector<Scalar>& a, SignalRef<Scalar> x) {
  for (Index h = 0; h < x.rows(); ++h) {
    x.row(h) = x.row(h).cwiseMax(Scalar(0)) + a(h) * x.row(h).cwiseMin(Scalar(0));
  }
}

template <typename Scalar>
Vector<Scalar> dense_forward(const std::vector<DenseLayer<Scalar>>& layers, Vector<Scalar> v) {
  for (const auto& layer : layers) {
    Vector<Scalar> next = layer.weight * v + layer.bias;
    if (layer.prelu.size() > 0) {
      next = next.cwiseMax(Scalar(0)) + layer.prelu.cwiseProduct(next.cwiseMin(Scalar(0)));
    }
    v = std::move(next);
  }
  return v;
}

/// One block in place on `x` (c x L). `inner` and `ssm_out` are scratch of the
/// same shape. The mix product is split into column chunks so Eigen's GEMM
/// blocking stays on the stack.
template <typename Scalar>
void run_block(const BlockWeights<Scalar>& bw, const Vector<Scalar>& gamma,
               const Vector<Scalar>& beta, const DiscreteSsm& ssm, FftBlockFilter* filter,
               SsmMode mode, SsmState& state, SignalRef<Scalar> x, SignalRef<Scalar> inner,
               SignalRef<Scalar> ssm_out) {
  const Index length = x.cols();
  constexpr Index kChunk = 256;
  for (Index t0 = 0; t0 < length; t0 += kChunk) {
    const Index n = std::min(kChunk, length - t0);
    inner.middleCols(t0, n).noalias() = bw.mix_weight * x.middleCols(t0, n);
  }
  inner.array().colwise() += bw.mix_bias.array();
  prelu_inplace<Scalar>(bw.prelu1, inner);

  if (mode == SsmMode::Recurrent || length == 1 || filter == nullptr) {
    process_block_recurrent(ssm, state, inner, ssm_out);
  } else {
    filter->process(state, inner, ssm_out);
  }

  ssm_out.array().colwise() *= bw.norm_scale.array();
  ssm_out.array().colwise() += bw.norm_shift.array();
  ssm_out.array().colwise() *= gamma.array();
  ssm_out.array().colwise() += beta.array();
  prelu_inplace<Scalar>(bw.prelu2, ssm_out);
  x += ssm_out;
}

}  // namespace detail

/// Control MLP forward. Computed once per render and shared by every block.
template <typename Scalar>
Vector<Scalar> embed_controls(const ModelWeights<Scalar>& w, const ControlVector& ctrl) {
  ctrl.validate();
  Vector<Scalar> v(2);
  v << static_cast<Scalar>(ctrl.peak_reduction), static_cast<Scalar>(ctrl.limit_switch);
  Vector<Scalar> e = detail::dense_forward(w.control_mlp, std::move(v));
  if (!e.allFinite()) throw Error(ErrorCode::NonFinite, "control embedding is not finite");
  return e;
}

/// Splits the per-block FiLM projection of `embedding` into (gamma, beta).
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> film_parameters(const BlockWeights<Scalar>& bw,
                                                          const Vector<Scalar>& embedding) {
  if (bw.film_weight.cols() != embedding.size()) {
    throw Error(ErrorCode::DimensionMismatch, "film weight does not match embedding size");
  }
  const Vector<Scalar> gb = bw.film_weight * embedding + bw.film_bias;
  const Index c = gb.size() / 2;
  return {gb.head(c), gb.tail(c)};
}

/// Shared forward core for one-shot rendering and streaming. Holds the
/// discretised SSMs, FiLM parameters for a fixed control setting and scratch
/// storage. Scratch grows to the largest block length and is then reused, so
/// run() is allocation-free once reserve() covers the block length.
template <typename Scalar>
class ModelEngine {
 public:
  ModelEngine(std::shared_ptr<const ModelWeights<Scalar>> weights, const ControlVector& ctrl,
              SsmMode mode = SsmMode::Fft)
      : weights_(std::move(weights)), mode_(mode) {
    validate(*weights_);
    embedding_ = embed_controls(*weights_, ctrl);
    for (const auto& bw : weights_->blocks) {
      discrete_.push_back(discretize(bw.ssm));
      filters_.emplace_back(discrete_.back());
      auto [g, b] = film_parameters(bw, embedding_);
      gamma_.push_back(std::move(g));
      beta_.push_back(std::move(b));
    }
  }

  const ModelWeights<Scalar>& weights() const { return *weights_; }
  const ModelConfig& config() const { return weights_->config; }
  const Vector<Scalar>& embedding() const { return embedding_; }
  SsmMode mode() const { return mode_; }

  void reserve(Index max_length) {
    if (max_length <= capacity_) return;
    const Index c = config().channels;
    x_.resize(c, max_length);
    inner_.resize(c, max_length);
    ssm_out_.resize(c, max_length);
    if (mode_ == SsmMode::Fft) {
      for (auto& f : filters_) f.reserve(max_length);
    }
    capacity_ = max_length;
  }

  /// Renders `u` into `y` (same length), advancing `state`. Returns the number
  /// of input samples outside [-1, 1]; they are processed unclamped.
  Index run(const Eigen::Ref<const Vector<Scalar>>& u, Eigen::Ref<Vector<Scalar>> y,
            ModelState& state) {
    const ModelWeights<Scalar>& w = *weights_;
    const Index length = u.size();
    if (length < 1 || y.size() != length) {
      throw Error(ErrorCode::DimensionMismatch, "input and output lengths must match and be >= 1");
    }
    if (!state.matches(w.config)) {
      throw Error(ErrorCode::StateMismatch, "model state was built for a different config");
    }
    reserve(length);

    const Index out_of_range = (u.array().abs() > Scalar(1)).count();

    auto x = x_.leftCols(length);
    for (Index h = 0; h < x.rows(); ++h) {
      x.row(h) = (u.transpose().array() * w.expand_weight(h, 0) + w.expand_bias(h)).matrix();
    }

    for (std::size_t b = 0; b < w.blocks.size(); ++b) {
      detail::run_block<Scalar>(w.blocks[b], gamma_[b], beta_[b], discrete_[b], &filters_[b],
                                mode_, state.blocks[b], x, inner_.leftCols(length),
                                ssm_out_.leftCols(length));
    }

    y.setConstant(w.contract_bias(0));
    for (Index h = 0; h < x.rows(); ++h) {
      y += w.contract_weight(0, h) * x.row(h).transpose();
    }
    // tanh saturates to exactly +-1 in finite precision; keep the bound strict.
    const Scalar bound = std::nextafter(Scalar(1), Scalar(0));
    y = y.array().tanh().cwiseMin(bound).cwiseMax(-bound).matrix();
    if (!y.allFinite()) throw Error(ErrorCode::NonFinite, "model output is not finite");
    return out_of_range;
  }

 private:
  std::shared_ptr<const ModelWeights<Scalar>> weights_;
  SsmMode mode_;
  Vector<Scalar> embedding_;
  std::vector<DiscreteSsm> discrete_;
  std::vector<FftBlockFilter> filters_;
  std::vector<Vector<Scalar>> gamma_;
  std::vector<Vector<Scalar>> beta_;
  Signal<Scalar> x_;
  Signal<Scalar> inner_;
  Signal<Scalar> ssm_out_;
  Index capacity_ = 0;
};

/// One block on a c x L signal, advancing `state`.
template <typename Scalar>
Signal<Scalar> block_forward(const BlockWeights<Scalar>& bw, const Signal<Scalar>& x,
                             const Vector<Scalar>& embedding, SsmState& state,
                             SsmMode mode = SsmMode::Fft) {
  const Index c = bw.mix_weight.rows();
  if (x.rows() != c || bw.mix_weight.cols() != c || bw.ssm.channels() != c ||
      bw.film_weight.rows() != 2 * c) {
    throw Error(ErrorCode::DimensionMismatch, "block_forward: channel counts disagree");
  }
  const DiscreteSsm ssm = discretize(bw.ssm);
  if (!state.matches(ssm)) throw Error(ErrorCode::DimensionMismatch, "block_forward: state shape");
  auto [gamma, beta] = film_parameters(bw, embedding);
  FftBlockFilter filter(ssm);
  Signal<Scalar> out = x;
  Signal<Scalar> inner(x.rows(), x.cols());
  Signal<Scalar> ssm_out(x.rows(), x.cols());
  detail::run_block<Scalar>(bw, gamma, beta, ssm, &filter, mode, state, out, inner, ssm_out);
  if (!out.allFinite()) throw Error(ErrorCode::NonFinite, "block output is not finite");
  return out;
}

/// One-shot render of a mono signal. Warns (does not clamp) when |u| > 1.
template <typename Scalar>
Vector<Scalar> model_forward(const ModelWeights<Scalar>& w, const Vector<Scalar>& u,
                             const ControlVector& ctrl, ModelState& state,
                             SsmMode mode = SsmMode::Fft) {
  // Non-owning handle; the engine does not outlive this call.
  std::shared_ptr<const ModelWeights<Scalar>> handle(std::shared_ptr<void>(), &w);
  ModelEngine<Scalar> engine(handle, ctrl, mode);
  Vector<Scalar> y(u.size());
  const Index out_of_range = engine.run(u, y, state);
  if (out_of_range > 0) {
    warn(std::to_string(out_of_range) + " input samples outside [-1, 1]; processed unclamped");
  }
  return y;
}

/// Weights for which the network reduces to y = tanh(u): identity mixing,
/// unit PReLU slopes, SSMs with c = 0 and d = 1, identity normalisation and
/// FiLM fixed at gamma = 1, beta = 0. Each block doubles its input through the
/// residual path, so the contraction reads channel 0 with weight 2^-blocks.
template <typename Scalar>
ModelWeights<Scalar> make_passthrough_weights(const ModelConfig& config);

/// Seeded random weights with PyTorch-like default scales.
template <typename Scalar>
ModelWeights<Scalar> make_random_weights(const ModelConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------

template <typename Scalar>
void validate(const ModelWeights<Scalar>& w) {
  w.config.validate();
  const Index c = w.config.channels;
  const Index n = w.config.ssm_order;
  const Index e = w.config.control_embedding_dim;
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
  };
  auto finite = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::NonFinite, what);
  };

  require(w.expand_weight.rows() == c && w.expand_weight.cols() == 1, "expand.weight");
  require(w.expand_bias.size() == c, "expand.bias");
  finite(w.expand_weight.allFinite() && w.expand_bias.allFinite(), "expand");
  require(static_cast<Index>(w.blocks.size()) == w.config.num_blocks, "block count");

  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    const auto& b = w.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    require(b.mix_weight.rows() == c && b.mix_weight.cols() == c, p + "mix.weight");
    require(b.mix_bias.size() == c, p + "mix.bias");
    require(b.prelu1.size() == c && b.prelu2.size() == c, p + "prelu");
    require(b.ssm.channels() == c && b.ssm.order() == n, p + "ssm");
    require(b.norm_scale.size() == c && b.norm_shift.size() == c, p + "norm");
    require(b.film_weight.rows() == 2 * c && b.film_weight.cols() == e, p + "film.weight");
    require(b.film_bias.size() == 2 * c, p + "film.bias");
    finite(b.mix_weight.allFinite() && b.mix_bias.allFinite() && b.prelu1.allFinite() &&
               b.prelu2.allFinite() && b.norm_scale.allFinite() && b.norm_shift.allFinite() &&
               b.film_weight.allFinite() && b.film_bias.allFinite(),
           p + "weights");
    b.ssm.validate();
    if ((b.norm_scale.array() == Scalar(0)).any()) {
      throw Error(ErrorCode::InvalidArgument, p + "norm scale must be nonzero");
    }
  }

  require(w.control_mlp.size() == w.config.control_hidden.size() + 1, "control_mlp depth");
  Index in = w.config.control_dim;
  for (std::size_t i = 0; i < w.control_mlp.size(); ++i) {
    const auto& l = w.control_mlp[i];
    const bool last = i + 1 == w.control_mlp.size();
    const Index out = last ? e : w.config.control_hidden[i];
    const std::string p = "control_mlp." + std::to_string(i) + ".";
    require(l.weight.rows() == out && l.weight.cols() == in, p + "weight");
    require(l.bias.size() == out, p + "bias");
    require(l.prelu.size() == (last ? 0 : out), p + "prelu");
    finite(l.weight.allFinite() && l.bias.allFinite() && l.prelu.allFinite(), p + "weights");
    in = out;
  }

  require(w.contract_weight.rows() == 1 && w.contract_weight.cols() == c, "contract.weight");
  require(w.contract_bias.size() == 1, "contract.bias");
  finite(w.contract_weight.allFinite() && w.contract_bias.allFinite(), "contract");
}

namespace detail {

template <typename Scalar>
std::vector<DenseLayer<Scalar>> zero_control_mlp(const ModelConfig& config) {
  std::vector<DenseLayer<Scalar>> layers;
  Index in = config.control_dim;
  for (Index hidden : config.control_hidden) {
    layers.push_back({Matrix<Scalar>::Zero(hidden, in), Vector<Scalar>::Zero(hidden),
                      Vector<Scalar>::Constant(hidden, Scalar(0.25))});
    in = hidden;
  }
  layers.push_back({Matrix<Scalar>::Zero(config.control_embedding_dim, in),
                    Vector<Scalar>::Zero(config.control_embedding_dim), Vector<Scalar>()});
  return layers;
}

}  // namespace detail

template <typename Scalar>
ModelWeights<Scalar> make_passthrough_weights(const ModelConfig& config) {
  config.validate();
  const Index c = config.channels;
  ModelWeights<Scalar> w;
  w.config = config;
  w.expand_weight = Matrix<Scalar>::Ones(c, 1);
  w.expand_bias = Vector<Scalar>::Zero(c);
  for (Index i = 0; i < config.num_blocks; ++i) {
    BlockWeights<Scalar> b;
    b.mix_weight = Matrix<Scalar>::Identity(c, c);
    b.mix_bias = Vector<Scalar>::Zero(c);
    b.prelu1 = Vector<Scalar>::Ones(c);
    b.prelu2 = Vector<Scalar>::Ones(c);
    b.ssm = init_s4d<Scalar>(config.ssm_order, c, static_cast<std::uint64_t>(i));
    b.ssm.c.setZero();
    b.ssm.d.setOnes();
    b.norm_scale = Vector<Scalar>::Ones(c);
    b.norm_shift = Vector<Scalar>::Zero(c);
    b.film_weight = Matrix<Scalar>::Zero(2 * c, config.control_embedding_dim);
    b.film_bias = Vector<Scalar>::Zero(2 * c);
    b.film_bias.head(c).setOnes();
    w.blocks.push_back(std::move(b));
  }
  w.control_mlp = detail::zero_control_mlp<Scalar>(config);
  w.contract_weight = Matrix<Scalar>::Zero(1, c);
  w.contract_weight(0, 0) = static_cast<Scalar>(std::ldexp(1.0, -static_cast<int>(config.num_blocks)));
  w.contract_bias = Vector<Scalar>::Zero(1);
  return w;
}

template <typename Scalar>
ModelWeights<Scalar> make_random_weights(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](Index rows, Index cols, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix<Scalar> m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(dist(rng));
    return m;
  };
  auto uniform_vec = [&](Index n, double lo, double hi) -> Vector<Scalar> {
    return uniform(n, 1, lo, hi).col(0);
  };

  const Index c = config.channels;
  const Index e = config.control_embedding_dim;
  const double kc = 1.0 / std::sqrt(static_cast<double>(c));
  const double ke = 1.0 / std::sqrt(static_cast<double>(e));

  ModelWeights<Scalar> w;
  w.config = config;
  w.expand_weight = uniform(c, 1, -1.0, 1.0);
  w.expand_bias = uniform_vec(c, -0.1, 0.1);
  for (Index i = 0; i < config.num_blocks; ++i) {
    BlockWeights<Scalar> b;
    b.mix_weight = uniform(c, c, -kc, kc);
    b.mix_bias = uniform_vec(c, -kc, kc);
    b.prelu1 = uniform_vec(c, 0.1, 0.4);
    b.ssm = init_s4d<Scalar>(config.ssm_order, c, rng());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index h = 0; h < c; ++h) b.ssm.d(h) = static_cast<Scalar>(normal(rng));
    b.norm_scale = uniform_vec(c, 0.5, 1.5);
    b.norm_shift = uniform_vec(c, -0.1, 0.1);
    b.film_weight = uniform(2 * c, e, -ke, ke);
    b.film_bias = uniform_vec(2 * c, -ke, ke);
    b.film_bias.head(c).array() += Scalar(1);
    b.prelu2 = uniform_vec(c, 0.1, 0.4);
    w.blocks.push_back(std::move(b));
  }
  Index in = config.control_dim;
  for (std::size_t i = 0; i <= config.control_hidden.size(); ++i) {
    const bool last = i == config.control_hidden.size();
    const Index out = last ? e : config.control_hidden[i];
    const double k = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer<Scalar> l{uniform(out, in, -k, k), uniform_vec(out, -k, k),
                         last ? Vector<Scalar>() : Vector<Scalar>::Constant(out, Scalar(0.25))};
    w.control_mlp.push_back(std::move(l));
    in = out;
  }
  w.contract_weight = uniform(1, c, -kc, kc);
  w.contract_bias = Vector<Scalar>::Zero(1);
  return w;
}

}  // namespace s4drc
