#include "gridcaps/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "gridcaps/errors.hpp"

namespace gridcaps {

template <class T>
void normalize_window(const PmuWindow& w, T* out) {
  const std::size_t g_n = w.n_gen, t_n = w.t_len;
  std::vector<double> dev(g_n * t_n);
  for (int ch = 0; ch < 2; ++ch) {
    const double base = ch == 0 ? kNominalHz : 0.0;
    for (std::size_t i = 0; i < dev.size(); ++i) dev[i] = static_cast<double>(w.data[i * 2 + ch]) - base;
    // Drop the common (center-of-inertia) motion at each time step.
    for (std::size_t t = 0; t < t_n; ++t) {
      double m = 0.0;
      for (std::size_t g = 0; g < g_n; ++g) m += dev[g * t_n + t];
      m /= static_cast<double>(g_n);
      for (std::size_t g = 0; g < g_n; ++g) dev[g * t_n + t] -= m;
    }
    double acc = 0.0;
    for (double d : dev) acc += d * d;
    const double rms = std::sqrt(acc / static_cast<double>(dev.size()));
    const double scale = rms > 0 ? 1.0 / rms : 0.0;
    for (std::size_t i = 0; i < dev.size(); ++i) out[i * 2 + ch] = static_cast<T>(dev[i] * scale);
  }
}

template <class T>
Tensor<T> make_batch(const std::vector<const PmuWindow*>& windows) {
  if (windows.empty()) throw StructuralError("empty batch");
  const auto g = static_cast<int>(windows[0]->n_gen), t = static_cast<int>(windows[0]->t_len);
  Tensor<T> x({static_cast<int>(windows.size()), g, t, 2});
  const std::size_t per = static_cast<std::size_t>(g) * t * 2;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i]->data.size() != per) throw StructuralError("batch: mixed window shapes");
    normalize_window(*windows[i], x.ptr() + i * per);
  }
  return x;
}

template <class T>
Tensor<T> make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<const PmuWindow*> w;
  w.reserve(indices.size());
  for (auto i : indices) w.push_back(&ds.samples.at(i).window);
  return make_batch<T>(w);
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"patience", c.patience},
          {"optimizer", to_json(c.optim)},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.patience = j.value("patience", c.patience);
  if (j.contains("optimizer")) c.optim = optim_from_json(j.at("optimizer"));
  c.seed = j.value("seed", c.seed);
  if (c.epochs < 1 || c.batch_size < 1 || c.patience < 1) throw ConfigError("training: epochs, batch_size and patience must be >= 1");
  return c;
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  os << std::setprecision(9);
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss << ',' << e.val_acc << '\n';
  }
  return os.str();
}

namespace {

std::vector<int> labels_of(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (auto i : idx) y.push_back(ds.samples[i].class_index);
  return y;
}

int count_correct(const Tensor<float>& scores, const std::vector<int>& labels) {
  const int q = scores.dim(1);
  int correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (argmax_lowest(scores.ptr() + b * static_cast<std::size_t>(q), q) == labels[b]) ++correct;
  }
  return correct;
}

}  // namespace

Evaluation evaluate(Classifier<float>& model, const Dataset& ds, int batch_size) {
  Evaluation ev;
  ev.predictions.reserve(ds.size());
  const ForwardContext ctx{false, nullptr};
  double loss = 0.0;
  int correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(ds.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto y = labels_of(ds, idx);
    const auto out = model.forward(make_batch<float>(ds, idx), ctx);
    loss += model.loss(out, y, nullptr) * static_cast<double>(idx.size());
    const auto scores = model.class_scores(out);
    const int q = scores.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const int p = argmax_lowest(scores.ptr() + b * static_cast<std::size_t>(q), q);
      ev.predictions.push_back(p);
      if (p == y[b]) ++correct;
    }
  }
  if (ds.size()) {
    ev.loss = loss / static_cast<double>(ds.size());
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  }
  return ev;
}

std::vector<int> predict(Classifier<float>& model, const Dataset& ds, int batch_size) {
  return evaluate(model, ds, batch_size).predictions;
}

int predict(Classifier<float>& model, const PmuWindow& window) {
  const auto out = model.forward(make_batch<float>(std::vector<const PmuWindow*>{&window}), {false, nullptr});
  const auto scores = model.class_scores(out);
  return argmax_lowest(scores.ptr(), scores.dim(1));
}

TrainHistory train_model(Classifier<float>& model, const Dataset& train, const Dataset& val,
                         const TrainConfig& cfg) {
  if (train.size() == 0) throw ConfigError("training set is empty");
  if (static_cast<int>(train.n_classes()) != model.n_classes()) {
    throw ConfigError("model has " + std::to_string(model.n_classes()) + " classes, dataset has " +
                      std::to_string(train.n_classes()));
  }
  const auto params = model.params();
  Optimizer<float> opt(cfg.optim, params);
  TrainHistory hist;
  std::vector<ParamBlock> best;
  double best_acc = -1.0;
  int since_best = 0;
  std::size_t global_batch = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(cfg.seed, streams::shuffle, static_cast<std::uint64_t>(epoch));
    Rng drop_rng = make_rng(cfg.seed, streams::dropout, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const ForwardContext ctx{true, &drop_rng};
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      const auto y = labels_of(train, idx);
      opt.zero_grad();
      const auto out = model.forward(make_batch<float>(train, idx), ctx);
      Tensor<float> g;
      const double loss = model.loss(out, y, &g);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(global_batch));
      }
      model.backward(g);
      opt.step(global_batch++);
      loss_sum += loss * static_cast<double>(idx.size());
      correct += count_correct(model.class_scores(out), y);
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(train.size());
    st.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    if (val.size()) {
      const auto ev = evaluate(model, val);
      st.val_loss = ev.loss;
      st.val_acc = ev.accuracy;
    } else {
      st.val_loss = st.train_loss;
      st.val_acc = st.train_acc;
    }
    hist.epochs.push_back(st);
    if (cfg.verbose) {
      std::cerr << model.kind() << " epoch " << epoch << " loss " << st.train_loss << " acc " << st.train_acc
                << " val_loss " << st.val_loss << " val_acc " << st.val_acc << '\n';
    }
    if (st.val_acc > best_acc) {
      best_acc = st.val_acc;
      best = snapshot(params);
      hist.best_epoch = epoch;
      hist.best_val_acc = st.val_acc;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  restore(best, params);
  return hist;
}

Checkpoint make_checkpoint(Classifier<float>& model, const nlohmann::json& run_meta) {
  Checkpoint c;
  c.model_kind = model.kind();
  c.meta["architecture"] = model.architecture();
  c.meta["run"] = run_meta;
  c.blocks = snapshot(model.params());
  return c;
}

std::unique_ptr<Classifier<float>> model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("architecture")) throw FormatError("checkpoint has no architecture block");
  auto model = make_model<float>(ckpt.meta.at("architecture"), 0);
  if (model->kind() != ckpt.model_kind) throw FormatError("checkpoint kind does not match its architecture");
  restore(ckpt.blocks, model->params());
  return model;
}

template void normalize_window<float>(const PmuWindow&, float*);
template void normalize_window<double>(const PmuWindow&, double*);
template Tensor<float> make_batch<float>(const Dataset&, const std::vector<std::size_t>&);
template Tensor<double> make_batch<double>(const Dataset&, const std::vector<std::size_t>&);
template Tensor<float> make_batch<float>(const std::vector<const PmuWindow*>&);
template Tensor<double> make_batch<double>(const std::vector<const PmuWindow*>&);

}  // namespace gridcaps
