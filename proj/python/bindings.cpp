#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <limits>

#include "gridcaps/capsnet.hpp"
#include "gridcaps/checkpoint.hpp"
#include "gridcaps/dataset.hpp"
#include "gridcaps/errors.hpp"
#include "gridcaps/eval.hpp"
#include "gridcaps/selfcheck.hpp"
#include "gridcaps/training.hpp"

namespace py = pybind11;
using namespace gridcaps;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

GridCase grid_case(const std::string& name, const std::string& data_dir) {
  return data_dir.empty() ? load_grid_case(name) : load_grid_case(name, data_dir);
}

// [N, G, T, 2] copy of the raw windows (Hz, rad).
FloatArray windows_of(const Dataset& ds) {
  FloatArray out({ds.size(), ds.n_gen, ds.t_len, std::size_t{2}});
  float* dst = out.mutable_data();
  const std::size_t per = ds.n_gen * ds.t_len * 2;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::memcpy(dst + i * per, ds.samples[i].window.data.data(), per * sizeof(float));
  }
  return out;
}

std::vector<PmuWindow> windows_from(const FloatArray& a) {
  if (a.ndim() != 4 || a.shape(3) != 2) throw StructuralError("windows must be [N, n_gen, T, 2]");
  const auto n = static_cast<std::size_t>(a.shape(0)), g = static_cast<std::size_t>(a.shape(1)),
             t = static_cast<std::size_t>(a.shape(2));
  std::vector<PmuWindow> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PmuWindow w(g, t);
    std::memcpy(w.data.data(), a.data() + i * g * t * 2, g * t * 2 * sizeof(float));
    out.push_back(std::move(w));
  }
  return out;
}

struct Model {
  std::unique_ptr<Classifier<float>> net;
  nlohmann::json meta;

  FloatArray scores(const FloatArray& x) {
    const auto ws = windows_from(x);
    if (ws.empty()) return FloatArray({std::size_t{0}, static_cast<std::size_t>(net->n_classes())});
    std::vector<const PmuWindow*> ptrs;
    for (const auto& w : ws) ptrs.push_back(&w);
    const auto s = net->class_scores(net->forward(make_batch<float>(ptrs), {}));
    FloatArray out({static_cast<std::size_t>(s.dim(0)), static_cast<std::size_t>(s.dim(1))});
    std::memcpy(out.mutable_data(), s.ptr(), s.size() * sizeof(float));
    return out;
  }

  py::array_t<int> predict(const FloatArray& x) {
    const auto s = scores(x);
    const auto n = static_cast<std::size_t>(s.shape(0));
    const int q = static_cast<int>(s.shape(1));
    py::array_t<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out.mutable_data()[i] = argmax_lowest(s.data() + i * q, q);
    return out;
  }
};

}  // namespace

PYBIND11_MODULE(_gridcaps, m) {
  m.doc() = "Load-altering attack simulation and capsule-network localization";

  static py::exception<Error> base(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<StructuralError>(m, "StructuralError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<RangeError>(m, "RangeError", base.ptr());
  py::register_exception<SamplingError>(m, "SamplingError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def("supported_cases", &supported_cases);

  py::class_<GridCase>(m, "GridCase")
      .def_readonly("name", &GridCase::name)
      .def_property_readonly("n_gen", [](const GridCase& g) { return g.topology.n_gen(); })
      .def_property_readonly("n_load", [](const GridCase& g) { return g.topology.n_load(); })
      .def_property_readonly("generator_buses", [](const GridCase& g) { return g.topology.generator_buses; })
      .def_property_readonly("load_buses", [](const GridCase& g) { return g.topology.load_buses; })
      .def("attack_free_eigenvalues", [](const GridCase& g) {
        const auto& t = g.topology;
        return eigenvalues(g.model(AttackScenario::none(t.n_load(), t.n_gen())).a);
      })
      .def("__repr__", [](const GridCase& g) {
        return "<GridCase " + g.name + ": " + std::to_string(g.topology.n_gen()) + " generators, " +
               std::to_string(g.topology.n_load()) + " loads>";
      });
  m.def("load_grid_case", &grid_case, py::arg("name"), py::arg("data_dir") = "");

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("case_name", &Dataset::case_name)
      .def_readonly("n_gen", &Dataset::n_gen)
      .def_readonly("t_len", &Dataset::t_len)
      .def_readonly("class_map", &Dataset::class_map)
      .def_readonly("seed", &Dataset::seed)
      .def_property_readonly("split", [](const Dataset& d) { return to_string(d.split); })
      .def("__len__", &Dataset::size)
      .def("windows", &windows_of, "[N, n_gen, T, 2] float32: frequency (Hz) and angle (rad)")
      .def("labels", [](const Dataset& d) {
        py::array_t<int> out(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) out.mutable_data()[i] = d.samples[i].class_index;
        return out;
      })
      .def("label_buses", [](const Dataset& d) {
        std::vector<int> out;
        for (const auto& s : d.samples) out.push_back(s.label_bus);
        return out;
      })
      .def("sha256", [](const Dataset& d) { return sha256_hex(serialize(d)); })
      .def("save", [](const Dataset& d, const std::filesystem::path& p) { save_dataset(d, p); });
  m.def("load_dataset", [](const std::filesystem::path& p) { return load_dataset(p); });

  m.def(
      "generate",
      [](const GridCase& grid, std::size_t n, std::uint64_t seed, const std::string& kind) {
        GenerationConfig gc;
        gc.n_samples = n;
        gc.seed = seed;
        gc.scenario.kind = attack_kind_from_string(kind);
        py::gil_scoped_release release;
        return generate_samples(grid, gc);
      },
      py::arg("grid"), py::arg("n"), py::arg("seed") = 0, py::arg("kind") = "single_point");

  m.def(
      "degrade",
      [](const Dataset& ds, double snr_db, std::pair<double, double> drop, std::pair<double, double> outlier,
         double delay_s, std::uint64_t seed, const GridCase* grid) {
        DegradationConfig c;
        c.snr_db = snr_db;
        c.drop_frac_lo = drop.first;
        c.drop_frac_hi = drop.second;
        c.outlier_frac_lo = outlier.first;
        c.outlier_frac_hi = outlier.second;
        c.delay_s = delay_s;
        return degrade_dataset(ds, c, seed, 0, grid);
      },
      py::arg("dataset"), py::arg("snr_db") = std::numeric_limits<double>::infinity(),
      py::arg("drop_frac") = std::pair<double, double>{0.0, 0.0},
      py::arg("outlier_frac") = std::pair<double, double>{0.0, 0.0}, py::arg("delay_s") = 0.0,
      py::arg("seed") = 0, py::arg("grid") = nullptr);

  py::class_<Model>(m, "Model")
      .def_property_readonly("kind", [](const Model& md) { return md.net->kind(); })
      .def_property_readonly("n_classes", [](const Model& md) { return md.net->n_classes(); })
      .def_property_readonly("meta", [](const Model& md) { return md.meta.dump(); })
      .def("scores", &Model::scores, py::arg("windows"))
      .def("predict", &Model::predict, py::arg("windows"));
  m.def("load_model", [](const std::filesystem::path& p) {
    const auto ck = load_checkpoint(p);
    return Model{model_from_checkpoint(ck), ck.meta};
  });
  m.def(
      "untrained_model",
      [](const std::string& kind, const std::string& case_name, int n_gen, int n_classes, std::uint64_t seed) {
        return Model{make_model<float>(default_architecture(kind, case_name, n_gen, 100, n_classes), seed), {}};
      },
      py::arg("kind"), py::arg("case_name"), py::arg("n_gen"), py::arg("n_classes"), py::arg("seed") = 0);

  m.def("squash", [](const std::vector<double>& d) {
    std::vector<double> v(d.size());
    squash(d.data(), v.data(), static_cast<int>(d.size()));
    return v;
  });
  m.def("margin_loss", [](const std::vector<double>& lengths, int label) { return margin_loss(lengths, label); });
  m.def("episode_accuracy", &episode_accuracy, py::arg("predictions"), py::arg("labels"), py::arg("episodes"));

  py::class_<CheckResult>(m, "CheckResult")
      .def_readonly("name", &CheckResult::name)
      .def_readonly("passed", &CheckResult::passed)
      .def_readonly("value", &CheckResult::value)
      .def_readonly("tolerance", &CheckResult::tolerance)
      .def_readonly("detail", &CheckResult::detail);
  m.def("check_capsnet_gradients", &check_capsnet_gradients, py::arg("seed") = 0, py::arg("tol") = 1e-4);
  m.def("check_routing_invariants", &check_routing_invariants, py::arg("n_passes") = 100, py::arg("seed") = 0);
}
