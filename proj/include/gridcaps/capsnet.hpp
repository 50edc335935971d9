#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcaps/layers.hpp"
#include "gridcaps/model.hpp"

namespace gridcaps {

struct ConvSpec {
  int kernels = 0;
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
};

struct CapsPlan {
  std::string case_name;
  int n_gen = 0;
  int t_len = 100;
  int channels = 2;
  ConvSpec conv1{512, 1, 10, 1, 10};
  double dropout = 0.1;
  ConvSpec conv2{256, 2, 2, 1, 2};
  int primary_count = 0;  // P
  int primary_dim = 8;    // d_p
  int digit_count = 0;    // Q
  int digit_dim = 16;     // d_q
  int routing_iters = 5;  // r
  /// Std of the Gaussian init of the capsule transforms W_pq.
  double caps_init_std = 0.05;
  /// Squash each primary capsule before the transforms.
  bool squash_primary = true;

  std::array<int, 3> conv1_out() const;
  std::array<int, 3> conv2_out() const;
  /// Throws StructuralError when P * d_p does not match the conv2 output.
  void validate() const;
};

nlohmann::json to_json(const CapsPlan& plan);
CapsPlan caps_plan_from_json(const nlohmann::json& j);

/// Per-case geometry; ConfigError for an unknown case.
CapsPlan plan_for_case(const std::string& case_name);
/// Small plan (P=8, Q=3, r=5) for gradient checks.
CapsPlan reduced_plan();

inline constexpr double kSquashEps = 1e-8;

/// v = (|d|^2 / (1 + |d|^2)) d / |d|; zero when |d| <= 1e-8.
template <class T>
void squash(const T* d, T* v, int n);
/// Given s and dL/dv, writes dL/ds.
template <class T>
void squash_backward(const T* s, const T* gv, T* gs, int n);

struct MarginLossConfig {
  double m_plus = 0.9;
  double m_minus = 0.1;
  double lambda = 0.5;
};

/// Single-sample margin loss over capsule lengths.
double margin_loss(const std::vector<double>& lengths, int label, const MarginLossConfig& cfg = {});

/// Routing state of one sample, kept per iteration for backprop.
template <class T>
struct RoutingTrace {
  int P = 0, Q = 0, dq = 0, r = 0;
  std::vector<T> c;  // r x P x Q coupling coefficients
  std::vector<T> s;  // r x Q x dq pre-squash sums
  std::vector<T> v;  // r x Q x dq outputs

  const T* coupling(int it) const { return c.data() + static_cast<std::size_t>(it) * P * Q; }
  const T* output(int it) const { return v.data() + static_cast<std::size_t>(it) * Q * dq; }
  const T* final_output() const { return output(r - 1); }
  const T* final_coupling() const { return coupling(r - 1); }
};

/// Dynamic routing by agreement over predictions u_hat[P][Q][dq]; logits
/// start at zero.
template <class T>
void dynamic_routing(const T* u_hat, int P, int Q, int dq, int r, RoutingTrace<T>& trace);

/// Backprop through all unrolled iterations; accumulates into g_u_hat.
template <class T>
void routing_backward(const T* u_hat, const RoutingTrace<T>& trace, const T* g_v, T* g_u_hat);

/// Primary capsules -> per-pair transforms -> routing -> digit capsules.
/// Input [N, P * d_p], output [N, Q, d_q]. W is stored [P, d_p, Q, d_q];
/// class q's slice is drawn from its own RNG stream so that permuting
/// `class_order` permutes the initial outputs.
template <class T>
class CapsuleLayer : public Layer<T> {
 public:
  CapsuleLayer(int P, int dp, int Q, int dq, int r, double init_std, std::uint64_t seed,
               std::vector<int> class_order = {});

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& gy) override;
  std::vector<Param<T>*> params() override { return {&w_}; }
  std::string kind() const override { return "capsule"; }

  Param<T>& weight() { return w_; }
  /// Traces of the last forward pass (one per batch item).
  const std::vector<RoutingTrace<T>>& traces() const { return traces_; }

 private:
  int P_, dp_, Q_, dq_, r_;
  Param<T> w_;
  Tensor<T> x_;
  std::vector<T> u_hat_;
  std::vector<RoutingTrace<T>> traces_;
};

template <class T>
class CapsNet : public Classifier<T> {
 public:
  CapsNet(CapsPlan plan, std::uint64_t seed, std::vector<int> class_order = {});

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  void backward(const Tensor<T>& g_out) override;
  Tensor<T> class_scores(const Tensor<T>& out) const override;
  double loss(const Tensor<T>& out, const std::vector<int>& labels, Tensor<T>* grad) const override;
  std::vector<Param<T>*> params() override;
  std::string kind() const override { return "capsnet"; }
  nlohmann::json architecture() const override;
  int n_classes() const override { return plan_.digit_count; }

  const CapsPlan& plan() const { return plan_; }
  CapsuleLayer<T>& capsules() { return caps_; }
  MarginLossConfig margin;

 private:
  CapsPlan plan_;
  Conv2D<T> conv1_;
  ReLU<T> relu1_;
  Dropout<T> drop_;
  Conv2D<T> conv2_;
  ReLU<T> relu2_;
  CapsuleLayer<T> caps_;
  std::vector<int> conv2_shape_;
  Tensor<T> primary_pre_;
};

}  // namespace gridcaps
