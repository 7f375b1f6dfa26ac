#pragma once

// Dense building blocks for the two adapter networks and their linear heads:
// forward passes, hand-written reverse-mode gradients, softmax cross-entropy
// and Adam. Everything is templated on the scalar type; the training code
// instantiates it with double.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Core>

#include "fairadapter/error.hpp"

namespace fairadapter {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;

/// Two fully connected layers with a rectifier in between:
/// y = w2 * max(0, w1 * x + b1) + b2 (+ x when residual).
template <typename Scalar>
struct AdapterParams {
  Matrix<Scalar> w1;  // hidden x dim
  Vector<Scalar> b1;  // hidden
  Matrix<Scalar> w2;  // dim x hidden
  Vector<Scalar> b2;  // dim

  Eigen::Index dim() const { return w1.cols(); }
  Eigen::Index hidden() const { return w1.rows(); }

  static AdapterParams Zero(Eigen::Index dim, Eigen::Index hidden) {
    return {Matrix<Scalar>::Zero(hidden, dim), Vector<Scalar>::Zero(hidden), Matrix<Scalar>::Zero(dim, hidden),
            Vector<Scalar>::Zero(dim)};
  }

  bool operator==(const AdapterParams& o) const {
    return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && w2.rows() == o.w2.rows() &&
           w2.cols() == o.w2.cols() && b1.size() == o.b1.size() && b2.size() == o.b2.size() && w1 == o.w1 &&
           b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }
};

/// Linear two-way classifier. Logit 0 is natural, logit 1 is AI-generated.
template <typename Scalar>
struct HeadParams {
  Matrix<Scalar> w;  // 2 x dim
  Vector<Scalar> b;  // 2

  Eigen::Index dim() const { return w.cols(); }

  static HeadParams Zero(Eigen::Index dim) { return {Matrix<Scalar>::Zero(2, dim), Vector<Scalar>::Zero(2)}; }

  bool operator==(const HeadParams& o) const {
    return w.rows() == o.w.rows() && w.cols() == o.w.cols() && b.size() == o.b.size() && w == o.w && b == o.b;
  }
};

/// An adapter and the head that reads its output; the unit each optimizer owns.
template <typename Scalar>
struct AdapterBranch {
  AdapterParams<Scalar> adapter;
  HeadParams<Scalar> head;

  static AdapterBranch Zero(Eigen::Index dim, Eigen::Index hidden) {
    return {AdapterParams<Scalar>::Zero(dim, hidden), HeadParams<Scalar>::Zero(dim)};
  }
  bool operator==(const AdapterBranch& o) const { return adapter == o.adapter && head == o.head; }
};

/// Which head produces the final fake probability.
enum class ScorePath { classify_head, fair_head };

template <typename Scalar>
struct ModelParams {
  AdapterBranch<Scalar> fair;      // FairAdapter and the hybrid-sample head
  AdapterBranch<Scalar> classify;  // ClassifyAdapter and the final head
  ScorePath score_path = ScorePath::classify_head;

  Eigen::Index dim() const { return fair.adapter.dim(); }
  Eigen::Index hidden() const { return fair.adapter.hidden(); }

  static ModelParams Zero(Eigen::Index dim, Eigen::Index hidden) {
    return {AdapterBranch<Scalar>::Zero(dim, hidden), AdapterBranch<Scalar>::Zero(dim, hidden)};
  }
  bool operator==(const ModelParams& o) const {
    return fair == o.fair && classify == o.classify && score_path == o.score_path;
  }
};

// Apply fn to corresponding tensors of several same-shaped parameter structs.
template <typename Fn, typename Scalar, typename... Rest>
void zip_tensors(Fn&& fn, AdapterParams<Scalar>& first, Rest&... rest) {
  fn(first.w1, rest.w1...);
  fn(first.b1, rest.b1...);
  fn(first.w2, rest.w2...);
  fn(first.b2, rest.b2...);
}

template <typename Fn, typename Scalar, typename... Rest>
void zip_tensors(Fn&& fn, HeadParams<Scalar>& first, Rest&... rest) {
  fn(first.w, rest.w...);
  fn(first.b, rest.b...);
}

template <typename Fn, typename Scalar, typename... Rest>
void zip_tensors(Fn&& fn, AdapterBranch<Scalar>& first, Rest&... rest) {
  zip_tensors(fn, first.adapter, rest.adapter...);
  zip_tensors(fn, first.head, rest.head...);
}

template <typename Params>
Params zeros_like(Params p) {
  zip_tensors([](auto& t) { t.setZero(); }, p);
  return p;
}

template <typename Params>
bool all_finite(const Params& p) {
  bool ok = true;
  Params copy = p;
  zip_tensors([&](auto& t) { ok = ok && t.allFinite(); }, copy);
  return ok;
}

enum class InitScheme { uniform_fan_in, zeros };

namespace detail {

template <typename Scalar>
void fill_uniform(Matrix<Scalar>& m, Scalar bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<Scalar>(dist(rng));
}

inline void check_positive(Eigen::Index dim, Eigen::Index hidden) {
  if (dim < 1 || hidden < 1)
    throw DomainError("adapter dimensions must be positive (dim=" + std::to_string(dim) +
                      ", hidden=" + std::to_string(hidden) + ")");
}

}  // namespace detail

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
template <typename Scalar>
AdapterParams<Scalar> init_adapter(Eigen::Index dim, Eigen::Index hidden, InitScheme scheme, std::mt19937_64& rng) {
  detail::check_positive(dim, hidden);
  auto p = AdapterParams<Scalar>::Zero(dim, hidden);
  if (scheme == InitScheme::uniform_fan_in) {
    detail::fill_uniform<Scalar>(p.w1, Scalar(1) / std::sqrt(Scalar(dim)), rng);
    detail::fill_uniform<Scalar>(p.w2, Scalar(1) / std::sqrt(Scalar(hidden)), rng);
  }
  return p;
}

template <typename Scalar>
HeadParams<Scalar> init_head(Eigen::Index dim, InitScheme scheme, std::mt19937_64& rng) {
  detail::check_positive(dim, 1);
  auto h = HeadParams<Scalar>::Zero(dim);
  if (scheme == InitScheme::uniform_fan_in) detail::fill_uniform<Scalar>(h.w, Scalar(1) / std::sqrt(Scalar(dim)), rng);
  return h;
}

template <typename Scalar>
ModelParams<Scalar> init_model(Eigen::Index dim, Eigen::Index hidden, InitScheme scheme, std::uint64_t seed) {
  detail::check_positive(dim, hidden);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1a17u};
  std::mt19937_64 rng(seq);
  ModelParams<Scalar> m;
  m.fair.adapter = init_adapter<Scalar>(dim, hidden, scheme, rng);
  m.fair.head = init_head<Scalar>(dim, scheme, rng);
  m.classify.adapter = init_adapter<Scalar>(dim, hidden, scheme, rng);
  m.classify.head = init_head<Scalar>(dim, scheme, rng);
  return m;
}

template <typename Derived>
void check_input(Eigen::Index expected, const Eigen::MatrixBase<Derived>& x, const char* where) {
  if (x.size() != expected)
    throw DimensionError(std::string(where) + ": expected length " + std::to_string(expected) + ", got " +
                         std::to_string(x.size()));
}

template <typename Scalar, typename Derived>
Vector<Scalar> adapter_forward(const AdapterParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x, bool residual) {
  check_input(p.dim(), x, "adapter_forward");
  Vector<Scalar> hidden = (p.w1 * x + p.b1).cwiseMax(Scalar(0));
  Vector<Scalar> y = p.w2 * hidden + p.b2;
  if (residual) y += x;
  return y;
}

template <typename Scalar, typename Derived>
Vector2<Scalar> head_forward(const HeadParams<Scalar>& h, const Eigen::MatrixBase<Derived>& x) {
  check_input(h.dim(), x, "head_forward");
  return h.w * x + h.b;
}

template <typename Scalar>
Vector2<Scalar> softmax(const Vector2<Scalar>& logits) {
  const Scalar top = logits.maxCoeff();
  Vector2<Scalar> e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

/// -log softmax(logits)[label]. For two classes this is softplus(other - own),
/// evaluated without overflow for any finite logits.
template <typename Scalar>
Scalar softmax_ce(const Vector2<Scalar>& logits, int label) {
  const Scalar margin = logits[1 - label] - logits[label];
  return margin > Scalar(0) ? margin + std::log1p(std::exp(-margin)) : std::log1p(std::exp(margin));
}

/// d softmax_ce / d logits = softmax(logits) - onehot(label).
template <typename Scalar>
Vector2<Scalar> softmax_ce_grad(const Vector2<Scalar>& logits, int label) {
  Vector2<Scalar> g = softmax(logits);
  g[label] -= Scalar(1);
  return g;
}

/// Accumulates parameter gradients of a head evaluated at x into `grad`; returns dL/dx.
template <typename Scalar, typename Derived>
Vector<Scalar> head_backward(const HeadParams<Scalar>& h, const Eigen::MatrixBase<Derived>& x,
                             const Vector2<Scalar>& grad_logits, HeadParams<Scalar>& grad) {
  grad.w.noalias() += grad_logits * x.transpose();
  grad.b += grad_logits;
  return h.w.transpose() * grad_logits;
}

/// Accumulates parameter gradients of adapter_forward(p, x, residual) into `grad`
/// given the upstream gradient; returns dL/dx.
template <typename Scalar, typename Derived>
Vector<Scalar> adapter_backward(const AdapterParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x, bool residual,
                                const Vector<Scalar>& grad_out, AdapterParams<Scalar>& grad) {
  const Vector<Scalar> pre = p.w1 * x + p.b1;
  const Vector<Scalar> hidden = pre.cwiseMax(Scalar(0));
  grad.w2.noalias() += grad_out * hidden.transpose();
  grad.b2 += grad_out;
  Vector<Scalar> grad_pre = p.w2.transpose() * grad_out;
  for (Eigen::Index k = 0; k < grad_pre.size(); ++k)
    if (!(pre[k] > Scalar(0))) grad_pre[k] = Scalar(0);
  grad.w1.noalias() += grad_pre * x.transpose();
  grad.b1 += grad_pre;
  Vector<Scalar> grad_x = p.w1.transpose() * grad_pre;
  if (residual) grad_x += grad_out;
  return grad_x;
}

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators shaped like Params plus the step counter.
template <typename Params>
struct AdamState {
  Params m;
  Params v;
  std::int64_t step = 0;
  AdamConfig config;

  AdamState(const Params& like, AdamConfig cfg) : m(zeros_like(like)), v(zeros_like(like)), config(cfg) {}
};

/// One bias-corrected Adam update of `params` in place.
template <typename Params>
void adam_step(AdamState<Params>& state, Params& params, const Params& grads) {
  zip_tensors(
      [](auto& p, auto& gt, auto& m, auto& v) {
        if (p.rows() != gt.rows() || p.cols() != gt.cols() || p.rows() != m.rows() || p.cols() != m.cols() ||
            p.rows() != v.rows() || p.cols() != v.cols())
          throw DimensionError("adam_step: parameter and gradient shapes differ");
      },
      params, grads, state.m, state.v);

  state.step += 1;
  const auto& c = state.config;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  zip_tensors(
      [&](auto& p, auto& gt, auto& m, auto& v) {
        using S = typename std::decay_t<decltype(p)>::Scalar;
        m = S(c.beta1) * m + S(1 - c.beta1) * gt;
        v = S(c.beta2) * v + S(1 - c.beta2) * gt.cwiseProduct(gt);
        auto m_hat = m.array() / S(correction1);
        auto v_hat = v.array() / S(correction2);
        p.array() -= S(c.learning_rate) * m_hat / (v_hat.sqrt() + S(c.epsilon));
      },
      params, grads, state.m, state.v);
}

using AdapterParamsd = AdapterParams<double>;
using HeadParamsd = HeadParams<double>;
using AdapterBranchd = AdapterBranch<double>;
using ModelParamsd = ModelParams<double>;

}  // namespace fairadapter
