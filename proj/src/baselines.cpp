#include "gridcaps/baselines.hpp"

#include "gridcaps/capsnet.hpp"
#include "gridcaps/errors.hpp"
#include "gridcaps/rng.hpp"

namespace gridcaps {

namespace {

int conv_len(int n, int k, int s) { return n >= k ? (n - k) / s + 1 : 0; }

}  // namespace

template <class T>
BaselineNet<T>::BaselineNet(std::string kind, int n_gen, int t_len, int n_classes, std::uint64_t seed,
                            double dropout)
    : kind_(std::move(kind)), n_gen_(n_gen), t_len_(t_len), n_classes_(n_classes), dropout_(dropout) {
  if (n_gen <= 0 || t_len <= 0 || n_classes < 2) throw StructuralError("baseline: bad dimensions");
  Rng rng = make_rng(seed, streams::init, 0x200);
  if (kind_ == "mlp") {
    net_.template add<Flatten<T>>();
    net_.template add<Dense<T>>("fc1", n_gen * t_len * 2, 512, rng);
    net_.template add<ReLU<T>>();
    net_.template add<Dropout<T>>(dropout);
    net_.template add<Dense<T>>("fc2", 512, 256, rng);
    net_.template add<ReLU<T>>();
    net_.template add<Dropout<T>>(dropout);
    net_.template add<Dense<T>>("out", 256, n_classes, rng);
  } else if (kind_ == "cnn1d") {
    const int w1 = conv_len(t_len, 10, 2);
    const int w2 = conv_len(w1, 10, 2);
    if (w2 <= 0) throw StructuralError("cnn1d: window too short");
    net_.template add<Conv2D<T>>("conv1", 2, 64, 1, 10, 1, 2, rng);
    net_.template add<ReLU<T>>();
    net_.template add<Dropout<T>>(dropout);
    net_.template add<Conv2D<T>>("conv2", 64, 64, 1, 10, 1, 2, rng);
    net_.template add<ReLU<T>>();
    net_.template add<Dropout<T>>(dropout);
    net_.template add<Flatten<T>>();
    net_.template add<Dense<T>>("fc1", n_gen * w2 * 64, 128, rng);
    net_.template add<ReLU<T>>();
    net_.template add<Dropout<T>>(dropout);
    net_.template add<Dense<T>>("out", 128, n_classes, rng);
  } else if (kind_ == "cnn2d") {
    const int h1 = conv_len(n_gen, 2, 1), w1 = conv_len(t_len, 10, 1) / 2;
    const int h2 = conv_len(h1, 2, 1), w2 = conv_len(w1, 5, 1) / 2;
    if (h2 <= 0 || w2 <= 0) throw StructuralError("cnn2d: input too small");
    net_.template add<Conv2D<T>>("conv1", 2, 64, 2, 10, 1, 1, rng);
    net_.template add<ReLU<T>>();
    net_.template add<MaxPool2D<T>>(1, 2);
    net_.template add<Conv2D<T>>("conv2", 64, 128, 2, 5, 1, 1, rng);
    net_.template add<ReLU<T>>();
    net_.template add<MaxPool2D<T>>(1, 2);
    net_.template add<Flatten<T>>();
    net_.template add<Dense<T>>("fc1", h2 * w2 * 128, 256, rng);
    net_.template add<ReLU<T>>();
    net_.template add<Dropout<T>>(dropout);
    net_.template add<Dense<T>>("out", 256, n_classes, rng);
  } else {
    throw ConfigError("unknown baseline kind '" + kind_ + "'");
  }
}

template <class T>
Tensor<T> BaselineNet<T>::forward(const Tensor<T>& x, const ForwardContext& ctx) {
  if (x.rank() != 4 || x.dim(1) != n_gen_ || x.dim(2) != t_len_ || x.dim(3) != 2) {
    throw StructuralError(kind_ + ": input " + shape_string(x.shape) + " does not match [N, " +
                          std::to_string(n_gen_) + ", " + std::to_string(t_len_) + ", 2]");
  }
  return net_.forward(x, ctx);
}

template <class T>
nlohmann::json BaselineNet<T>::architecture() const {
  return {{"kind", kind_}, {"input", {n_gen_, t_len_, 2}}, {"classes", n_classes_}, {"dropout", dropout_}};
}

std::vector<std::string> model_kinds() { return {"capsnet", "mlp", "cnn1d", "cnn2d"}; }

template <class T>
std::unique_ptr<Classifier<T>> make_model(const nlohmann::json& arch, std::uint64_t seed) {
  try {
    const auto kind = arch.at("kind").get<std::string>();
    if (kind == "capsnet") return std::make_unique<CapsNet<T>>(caps_plan_from_json(arch.at("plan")), seed);
    return std::make_unique<BaselineNet<T>>(kind, arch.at("input").at(0).get<int>(),
                                            arch.at("input").at(1).get<int>(), arch.at("classes").get<int>(),
                                            seed, arch.value("dropout", 0.1));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model architecture: ") + e.what());
  }
}

nlohmann::json default_architecture(const std::string& kind, const std::string& case_name, int n_gen,
                                    int t_len, int n_classes) {
  if (kind == "capsnet") {
    CapsPlan plan = plan_for_case(case_name);
    if (plan.n_gen != n_gen || plan.digit_count != n_classes || plan.t_len != t_len) {
      throw ConfigError("dataset shape does not match the " + case_name + " capsule plan");
    }
    return {{"kind", "capsnet"}, {"plan", to_json(plan)}};
  }
  if (kind != "mlp" && kind != "cnn1d" && kind != "cnn2d") throw ConfigError("unknown model kind '" + kind + "'");
  return {{"kind", kind}, {"input", {n_gen, t_len, 2}}, {"classes", n_classes}, {"dropout", 0.1}};
}

template class BaselineNet<float>;
template class BaselineNet<double>;
template std::unique_ptr<Classifier<float>> make_model<float>(const nlohmann::json&, std::uint64_t);
template std::unique_ptr<Classifier<double>> make_model<double>(const nlohmann::json&, std::uint64_t);

}  // namespace gridcaps
