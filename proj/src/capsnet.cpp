#include "gridcaps/capsnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "gridcaps/errors.hpp"
#include "gridcaps/rng.hpp"

namespace gridcaps {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using CStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;

template <class T>
T& as_lvalue(T&& t) {
  return t;
}

template <class T>
double dot(const T* a, const T* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

}  // namespace

// ---- plan

std::array<int, 3> CapsPlan::conv1_out() const {
  const int h = (n_gen - conv1.kh) / conv1.sh + 1;
  const int w = (t_len - conv1.kw) / conv1.sw + 1;
  return {h, w, conv1.kernels};
}

std::array<int, 3> CapsPlan::conv2_out() const {
  const auto c1 = conv1_out();
  const int h = (c1[0] - conv2.kh) / conv2.sh + 1;
  const int w = (c1[1] - conv2.kw) / conv2.sw + 1;
  return {h, w, conv2.kernels};
}

void CapsPlan::validate() const {
  if (n_gen <= 0 || t_len <= 0 || channels <= 0) throw StructuralError("caps plan: bad input shape");
  if (n_gen < conv1.kh || t_len < conv1.kw) throw StructuralError("caps plan: conv1 larger than input");
  const auto c1 = conv1_out();
  if (c1[0] < conv2.kh || c1[1] < conv2.kw) throw StructuralError("caps plan: conv2 larger than conv1 output");
  const auto c2 = conv2_out();
  if (c2[0] <= 0 || c2[1] <= 0) throw StructuralError("caps plan: empty conv2 output");
  if (static_cast<long>(primary_count) * primary_dim != static_cast<long>(c2[0]) * c2[1] * c2[2]) {
    throw StructuralError("caps plan: P * d_p = " + std::to_string(primary_count * primary_dim) +
                          " does not match conv2 output " + std::to_string(c2[0]) + "x" +
                          std::to_string(c2[1]) + "x" + std::to_string(c2[2]));
  }
  if (digit_count < 2 || digit_dim < 1 || routing_iters < 1) throw StructuralError("caps plan: bad digit layer");
  if (!(dropout >= 0 && dropout < 1)) throw StructuralError("caps plan: bad dropout rate");
  if (!(caps_init_std > 0)) throw StructuralError("caps plan: caps_init_std must be positive");
}

namespace {

nlohmann::json conv_json(const ConvSpec& c) {
  return {{"kernels", c.kernels}, {"size", {c.kh, c.kw}}, {"stride", {c.sh, c.sw}}};
}

ConvSpec conv_from(const nlohmann::json& j) {
  ConvSpec c;
  c.kernels = j.at("kernels").get<int>();
  c.kh = j.at("size").at(0).get<int>();
  c.kw = j.at("size").at(1).get<int>();
  c.sh = j.at("stride").at(0).get<int>();
  c.sw = j.at("stride").at(1).get<int>();
  return c;
}

}  // namespace

nlohmann::json to_json(const CapsPlan& p) {
  return {{"case", p.case_name},
          {"input", {p.n_gen, p.t_len, p.channels}},
          {"conv1", conv_json(p.conv1)},
          {"dropout", p.dropout},
          {"conv2", conv_json(p.conv2)},
          {"primary", {p.primary_count, p.primary_dim}},
          {"digit", {p.digit_count, p.digit_dim}},
          {"routing_iters", p.routing_iters},
          {"caps_init_std", p.caps_init_std},
          {"squash_primary", p.squash_primary}};
}

CapsPlan caps_plan_from_json(const nlohmann::json& j) {
  CapsPlan p;
  try {
    p.case_name = j.value("case", std::string());
    p.n_gen = j.at("input").at(0).get<int>();
    p.t_len = j.at("input").at(1).get<int>();
    p.channels = j.at("input").at(2).get<int>();
    p.conv1 = conv_from(j.at("conv1"));
    p.dropout = j.at("dropout").get<double>();
    p.conv2 = conv_from(j.at("conv2"));
    p.primary_count = j.at("primary").at(0).get<int>();
    p.primary_dim = j.at("primary").at(1).get<int>();
    p.digit_count = j.at("digit").at(0).get<int>();
    p.digit_dim = j.at("digit").at(1).get<int>();
    p.routing_iters = j.at("routing_iters").get<int>();
    p.caps_init_std = j.value("caps_init_std", p.caps_init_std);
    p.squash_primary = j.value("squash_primary", p.squash_primary);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("caps plan: ") + e.what());
  }
  p.validate();
  return p;
}

CapsPlan plan_for_case(const std::string& name) {
  CapsPlan p;
  p.case_name = name;
  if (name == "ieee14") {
    p.n_gen = 5;
    p.conv2 = {256, 2, 2, 1, 2};
    p.primary_count = 640;
    p.primary_dim = 8;
    p.digit_count = 9;
    p.digit_dim = 16;
  } else if (name == "ieee39") {
    p.n_gen = 10;
    p.conv2 = {256, 2, 2, 2, 2};
    p.primary_count = 800;
    p.primary_dim = 8;
    p.digit_count = 29;
    p.digit_dim = 16;
  } else if (name == "ieee57") {
    p.n_gen = 7;
    p.conv2 = {256, 2, 5, 1, 1};
    p.primary_count = 576;
    p.primary_dim = 16;
    p.digit_count = 50;
    p.digit_dim = 32;
  } else {
    throw ConfigError("no capsule plan for case '" + name + "'");
  }
  p.validate();
  return p;
}

CapsPlan reduced_plan() {
  CapsPlan p;
  p.case_name = "reduced";
  p.n_gen = 2;
  p.t_len = 20;
  p.conv1 = {4, 1, 5, 1, 5};
  p.conv2 = {8, 2, 2, 1, 2};
  p.primary_count = 8;
  p.primary_dim = 2;
  p.digit_count = 3;
  p.digit_dim = 4;
  p.routing_iters = 5;
  p.caps_init_std = 0.5;
  p.validate();
  return p;
}

// ---- squash / margin loss

template <class T>
void squash(const T* d, T* v, int n) {
  const double n2 = dot(d, d, n);
  const double norm = std::sqrt(n2);
  if (norm <= kSquashEps) {
    std::fill(v, v + n, T(0));
    return;
  }
  const double a = norm / (1.0 + n2);
  for (int i = 0; i < n; ++i) v[i] = static_cast<T>(a * static_cast<double>(d[i]));
}

template <class T>
void squash_backward(const T* s, const T* gv, T* gs, int n) {
  const double n2 = dot(s, s, n);
  const double norm = std::sqrt(n2);
  if (norm <= kSquashEps) {
    std::fill(gs, gs + n, T(0));
    return;
  }
  const double a = norm / (1.0 + n2);
  const double da = (1.0 - n2) / ((1.0 + n2) * (1.0 + n2));
  const double k = da / norm * dot(s, gv, n);
  for (int i = 0; i < n; ++i) {
    gs[i] = static_cast<T>(a * static_cast<double>(gv[i]) + k * static_cast<double>(s[i]));
  }
}

double margin_loss(const std::vector<double>& lengths, int label, const MarginLossConfig& cfg) {
  if (label < 0 || static_cast<std::size_t>(label) >= lengths.size()) throw RangeError("margin loss: bad label");
  double loss = 0.0;
  for (std::size_t q = 0; q < lengths.size(); ++q) {
    if (static_cast<int>(q) == label) {
      const double h = std::max(0.0, cfg.m_plus - lengths[q]);
      loss += h * h;
    } else {
      const double h = std::max(0.0, lengths[q] - cfg.m_minus);
      loss += cfg.lambda * h * h;
    }
  }
  return loss;
}

// ---- routing

template <class T>
void dynamic_routing(const T* u_hat, int P, int Q, int dq, int r, RoutingTrace<T>& tr) {
  if (r < 1) throw StructuralError("routing needs at least one iteration");
  tr.P = P;
  tr.Q = Q;
  tr.dq = dq;
  tr.r = r;
  const std::size_t pq = static_cast<std::size_t>(P) * Q;
  const std::size_t qd = static_cast<std::size_t>(Q) * dq;
  tr.c.assign(static_cast<std::size_t>(r) * pq, T(0));
  tr.s.assign(static_cast<std::size_t>(r) * qd, T(0));
  tr.v.assign(static_cast<std::size_t>(r) * qd, T(0));
  std::vector<double> b(pq, 0.0);
  std::vector<double> s(qd);
  for (int it = 0; it < r; ++it) {
    T* c = tr.c.data() + it * pq;
    for (int p = 0; p < P; ++p) {
      const double* bp = b.data() + static_cast<std::size_t>(p) * Q;
      const double m = *std::max_element(bp, bp + Q);
      double z = 0.0;
      for (int q = 0; q < Q; ++q) z += std::exp(bp[q] - m);
      for (int q = 0; q < Q; ++q) c[p * Q + q] = static_cast<T>(std::exp(bp[q] - m) / z);
    }
    std::fill(s.begin(), s.end(), 0.0);
    for (int p = 0; p < P; ++p) {
      for (int q = 0; q < Q; ++q) {
        const double cpq = static_cast<double>(c[p * Q + q]);
        const T* u = u_hat + (static_cast<std::size_t>(p) * Q + q) * dq;
        double* sq = s.data() + static_cast<std::size_t>(q) * dq;
        for (int k = 0; k < dq; ++k) sq[k] += cpq * static_cast<double>(u[k]);
      }
    }
    T* s_it = tr.s.data() + it * qd;
    T* v_it = tr.v.data() + it * qd;
    for (std::size_t i = 0; i < qd; ++i) s_it[i] = static_cast<T>(s[i]);
    for (int q = 0; q < Q; ++q) squash(s_it + q * dq, v_it + q * dq, dq);
    if (it + 1 < r) {
      for (int p = 0; p < P; ++p) {
        for (int q = 0; q < Q; ++q) {
          b[static_cast<std::size_t>(p) * Q + q] +=
              dot(u_hat + (static_cast<std::size_t>(p) * Q + q) * dq, v_it + q * dq, dq);
        }
      }
    }
  }
}

template <class T>
void routing_backward(const T* u_hat, const RoutingTrace<T>& tr, const T* g_v, T* g_u_hat) {
  const int P = tr.P, Q = tr.Q, dq = tr.dq, r = tr.r;
  const std::size_t pq = static_cast<std::size_t>(P) * Q;
  const std::size_t qd = static_cast<std::size_t>(Q) * dq;
  std::vector<double> gb(pq, 0.0);  // gradient w.r.t. the logits of the next iteration
  std::vector<double> gc(pq);
  std::vector<double> gv(qd);
  std::vector<T> gv_t(qd), gs(qd);
  for (int it = r - 1; it >= 0; --it) {
    const T* c = tr.c.data() + it * pq;
    const T* s_it = tr.s.data() + it * qd;
    const T* v_it = tr.v.data() + it * qd;
    for (std::size_t i = 0; i < qd; ++i) gv[i] = it == r - 1 ? static_cast<double>(g_v[i]) : 0.0;
    if (it + 1 < r) {
      // b_{it+1} = b_it + <u_hat, v_it>
      for (int p = 0; p < P; ++p) {
        for (int q = 0; q < Q; ++q) {
          const double g = gb[static_cast<std::size_t>(p) * Q + q];
          if (g == 0.0) continue;
          const std::size_t off = (static_cast<std::size_t>(p) * Q + q) * dq;
          for (int k = 0; k < dq; ++k) {
            gv[static_cast<std::size_t>(q) * dq + k] += g * static_cast<double>(u_hat[off + k]);
            g_u_hat[off + k] += static_cast<T>(g * static_cast<double>(v_it[q * dq + k]));
          }
        }
      }
    }
    for (std::size_t i = 0; i < qd; ++i) gv_t[i] = static_cast<T>(gv[i]);
    for (int q = 0; q < Q; ++q) squash_backward(s_it + q * dq, gv_t.data() + q * dq, gs.data() + q * dq, dq);
    for (int p = 0; p < P; ++p) {
      for (int q = 0; q < Q; ++q) {
        const std::size_t off = (static_cast<std::size_t>(p) * Q + q) * dq;
        const double cpq = static_cast<double>(c[p * Q + q]);
        for (int k = 0; k < dq; ++k) g_u_hat[off + k] += static_cast<T>(cpq * static_cast<double>(gs[q * dq + k]));
        gc[static_cast<std::size_t>(p) * Q + q] = dot(gs.data() + q * dq, u_hat + off, dq);
      }
    }
    // softmax over q, row by row; gb becomes the gradient w.r.t. b_it
    for (int p = 0; p < P; ++p) {
      double acc = 0.0;
      for (int q = 0; q < Q; ++q) acc += static_cast<double>(c[p * Q + q]) * gc[static_cast<std::size_t>(p) * Q + q];
      for (int q = 0; q < Q; ++q) {
        const std::size_t i = static_cast<std::size_t>(p) * Q + q;
        gb[i] += static_cast<double>(c[p * Q + q]) * (gc[i] - acc);
      }
    }
  }
}

// ---- capsule layer

template <class T>
CapsuleLayer<T>::CapsuleLayer(int P, int dp, int Q, int dq, int r, double init_std, std::uint64_t seed,
                              std::vector<int> class_order)
    : P_(P), dp_(dp), Q_(Q), dq_(dq), r_(r), w_("caps.W", {P, dp, Q, dq}) {
  if (P <= 0 || dp <= 0 || Q <= 0 || dq <= 0 || r <= 0) throw StructuralError("capsule layer: bad sizes");
  if (class_order.empty()) {
    class_order.resize(static_cast<std::size_t>(Q));
    std::iota(class_order.begin(), class_order.end(), 0);
  }
  if (class_order.size() != static_cast<std::size_t>(Q)) throw StructuralError("capsule layer: bad class order");
  for (int q = 0; q < Q; ++q) {
    Rng rng = make_rng(seed, streams::init, 0x100 + static_cast<std::uint64_t>(class_order[static_cast<std::size_t>(q)]));
    std::normal_distribution<double> d(0.0, init_std);
    for (int p = 0; p < P; ++p) {
      for (int i = 0; i < dp; ++i) {
        T* row = w_.value.ptr() + ((static_cast<std::size_t>(p) * dp + i) * Q + q) * dq;
        for (int k = 0; k < dq; ++k) row[k] = static_cast<T>(d(rng));
      }
    }
  }
}

template <class T>
Tensor<T> CapsuleLayer<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  if (x.rank() < 1 || x.stride0() != static_cast<std::size_t>(P_) * dp_) {
    throw StructuralError("capsule layer: expected " + std::to_string(P_ * dp_) + " inputs per item, got " +
                          shape_string(x.shape));
  }
  x_ = x;
  const int n = x.dim(0);
  const Eigen::Index qd = static_cast<Eigen::Index>(Q_) * dq_;
  const std::size_t per_item = static_cast<std::size_t>(P_) * qd;
  u_hat_.assign(static_cast<std::size_t>(n) * per_item, T(0));
  for (int p = 0; p < P_; ++p) {
    CStridedMap<T> u(x.ptr() + static_cast<std::size_t>(p) * dp_, n, dp_, Eigen::OuterStride<>(P_ * dp_));
    StridedMap<T> uh(u_hat_.data() + static_cast<std::size_t>(p) * qd, n, qd,
                     Eigen::OuterStride<>(static_cast<Eigen::Index>(per_item)));
    uh.noalias() = u * CMapMat<T>(w_.value.ptr() + static_cast<std::size_t>(p) * dp_ * qd, dp_, qd);
  }
  traces_.resize(static_cast<std::size_t>(n));
  Tensor<T> v({n, Q_, dq_});
  for (int b = 0; b < n; ++b) {
    auto& tr = traces_[static_cast<std::size_t>(b)];
    dynamic_routing(u_hat_.data() + b * per_item, P_, Q_, dq_, r_, tr);
    std::copy(tr.final_output(), tr.final_output() + qd, v.ptr() + b * qd);
  }
  return v;
}

template <class T>
Tensor<T> CapsuleLayer<T>::backward(const Tensor<T>& gy) {
  const int n = x_.dim(0);
  const Eigen::Index qd = static_cast<Eigen::Index>(Q_) * dq_;
  const std::size_t per_item = static_cast<std::size_t>(P_) * qd;
  if (gy.size() != static_cast<std::size_t>(n) * qd) throw StructuralError("capsule layer: bad grad shape");
  std::vector<T> g_uh(u_hat_.size(), T(0));
  for (int b = 0; b < n; ++b) {
    routing_backward(u_hat_.data() + b * per_item, traces_[static_cast<std::size_t>(b)], gy.ptr() + b * qd,
                     g_uh.data() + b * per_item);
  }
  Tensor<T> gx(x_.shape);
  for (int p = 0; p < P_; ++p) {
    CStridedMap<T> u(x_.ptr() + static_cast<std::size_t>(p) * dp_, n, dp_, Eigen::OuterStride<>(P_ * dp_));
    CStridedMap<T> guh(g_uh.data() + static_cast<std::size_t>(p) * qd, n, qd,
                       Eigen::OuterStride<>(static_cast<Eigen::Index>(per_item)));
    MapMat<T>(w_.grad.ptr() + static_cast<std::size_t>(p) * dp_ * qd, dp_, qd).noalias() += u.transpose() * guh;
    StridedMap<T> gu(gx.ptr() + static_cast<std::size_t>(p) * dp_, n, dp_, Eigen::OuterStride<>(P_ * dp_));
    gu.noalias() = guh * CMapMat<T>(w_.value.ptr() + static_cast<std::size_t>(p) * dp_ * qd, dp_, qd).transpose();
  }
  return gx;
}

// ---- full model

template <class T>
CapsNet<T>::CapsNet(CapsPlan plan, std::uint64_t seed, std::vector<int> class_order)
    : plan_((plan.validate(), std::move(plan))),
      conv1_("conv1", plan_.channels, plan_.conv1.kernels, plan_.conv1.kh, plan_.conv1.kw, plan_.conv1.sh,
             plan_.conv1.sw, as_lvalue(make_rng(seed, streams::init, 1))),
      drop_(plan_.dropout),
      conv2_("conv2", plan_.conv1.kernels, plan_.conv2.kernels, plan_.conv2.kh, plan_.conv2.kw, plan_.conv2.sh,
             plan_.conv2.sw, as_lvalue(make_rng(seed, streams::init, 2))),
      caps_(plan_.primary_count, plan_.primary_dim, plan_.digit_count, plan_.digit_dim, plan_.routing_iters,
            plan_.caps_init_std, seed, std::move(class_order)) {}

template <class T>
Tensor<T> CapsNet<T>::forward(const Tensor<T>& x, const ForwardContext& ctx) {
  if (x.rank() != 4 || x.dim(1) != plan_.n_gen || x.dim(2) != plan_.t_len || x.dim(3) != plan_.channels) {
    throw StructuralError("capsnet: input " + shape_string(x.shape) + " does not match plan [N, " +
                          std::to_string(plan_.n_gen) + ", " + std::to_string(plan_.t_len) + ", " +
                          std::to_string(plan_.channels) + "]");
  }
  Tensor<T> h = relu1_.forward(conv1_.forward(x, ctx), ctx);
  h = drop_.forward(h, ctx);
  h = relu2_.forward(conv2_.forward(h, ctx), ctx);
  conv2_shape_ = h.shape;
  h.reshape({x.dim(0), plan_.primary_count * plan_.primary_dim});
  if (plan_.squash_primary) {
    primary_pre_ = h;
    const int dp = plan_.primary_dim;
    for (std::size_t i = 0; i < h.data.size(); i += static_cast<std::size_t>(dp)) {
      squash(primary_pre_.data.data() + i, h.data.data() + i, dp);
    }
  }
  return caps_.forward(h, ctx);
}

template <class T>
void CapsNet<T>::backward(const Tensor<T>& g_out) {
  Tensor<T> g = caps_.backward(g_out);
  if (plan_.squash_primary) {
    const int dp = plan_.primary_dim;
    Tensor<T> gs(g.shape);
    for (std::size_t i = 0; i < g.data.size(); i += static_cast<std::size_t>(dp)) {
      squash_backward(primary_pre_.data.data() + i, g.data.data() + i, gs.data.data() + i, dp);
    }
    g = std::move(gs);
  }
  g.reshape(conv2_shape_);
  g = conv2_.backward(relu2_.backward(g));
  g = drop_.backward(g);
  conv1_.backward(relu1_.backward(g));
}

template <class T>
Tensor<T> CapsNet<T>::class_scores(const Tensor<T>& out) const {
  const int n = out.dim(0), q = out.dim(1), d = out.dim(2);
  Tensor<T> s({n, q});
  for (int b = 0; b < n; ++b) {
    for (int k = 0; k < q; ++k) {
      const T* v = out.ptr() + (static_cast<std::size_t>(b) * q + k) * d;
      s.data[static_cast<std::size_t>(b) * q + k] = static_cast<T>(std::sqrt(dot(v, v, d)));
    }
  }
  return s;
}

template <class T>
double CapsNet<T>::loss(const Tensor<T>& out, const std::vector<int>& labels, Tensor<T>* grad) const {
  const int n = out.dim(0), q = out.dim(1), d = out.dim(2);
  if (labels.size() != static_cast<std::size_t>(n)) throw StructuralError("capsnet loss: label count mismatch");
  if (grad) *grad = Tensor<T>(out.shape);
  double total = 0.0;
  std::vector<double> lengths(static_cast<std::size_t>(q));
  for (int b = 0; b < n; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    for (int k = 0; k < q; ++k) {
      const T* v = out.ptr() + (static_cast<std::size_t>(b) * q + k) * d;
      lengths[static_cast<std::size_t>(k)] = std::sqrt(dot(v, v, d));
    }
    total += margin_loss(lengths, y, margin);
    if (!grad) continue;
    for (int k = 0; k < q; ++k) {
      const double len = lengths[static_cast<std::size_t>(k)];
      double dl = 0.0;
      if (k == y) {
        dl = -2.0 * std::max(0.0, margin.m_plus - len);
      } else {
        dl = 2.0 * margin.lambda * std::max(0.0, len - margin.m_minus);
      }
      if (dl == 0.0 || len <= 0.0) continue;
      const std::size_t off = (static_cast<std::size_t>(b) * q + k) * d;
      for (int e = 0; e < d; ++e) {
        grad->data[off + e] = static_cast<T>(dl * static_cast<double>(out.data[off + e]) / len / n);
      }
    }
  }
  return total / n;
}

template <class T>
std::vector<Param<T>*> CapsNet<T>::params() {
  return {&conv1_.kernel(), &conv1_.bias(), &conv2_.kernel(), &conv2_.bias(), &caps_.weight()};
}

template <class T>
nlohmann::json CapsNet<T>::architecture() const {
  return {{"kind", "capsnet"}, {"plan", to_json(plan_)}};
}

#define GRIDCAPS_INSTANTIATE(T)                                                                     \
  template void squash<T>(const T*, T*, int);                                                       \
  template void squash_backward<T>(const T*, const T*, T*, int);                                    \
  template void dynamic_routing<T>(const T*, int, int, int, int, RoutingTrace<T>&);                 \
  template void routing_backward<T>(const T*, const RoutingTrace<T>&, const T*, T*);                \
  template class CapsuleLayer<T>;                                                                   \
  template class CapsNet<T>;

GRIDCAPS_INSTANTIATE(float)
GRIDCAPS_INSTANTIATE(double)

#undef GRIDCAPS_INSTANTIATE

}  // namespace gridcaps
