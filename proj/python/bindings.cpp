#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sppnet/cascade.hpp"
#include "sppnet/dataset.hpp"
#include "sppnet/errors.hpp"
#include "sppnet/model_io.hpp"
#include "sppnet/omegaval.hpp"
#include "sppnet/physics.hpp"
#include "sppnet/pipeline.hpp"

namespace py = pybind11;
using namespace sppnet;

namespace {

py::array_t<double> samples_array(const data::Dataset& ds) {
  py::array_t<double> out({ds.size(), data::kColumns});
  auto a = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.samples[i].to_array();
    for (std::size_t c = 0; c < data::kColumns; ++c) a(i, c) = row[c];
  }
  return out;
}

data::Dataset dataset_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
  if (arr.ndim() != 2 || arr.shape(1) != static_cast<py::ssize_t>(data::kColumns)) {
    throw DomainError("expected an (N, 4) array of lambda0_nm, t_nm, lambda_spp_nm, L_spp_nm");
  }
  auto a = arr.unchecked<2>();
  data::Dataset ds;
  for (py::ssize_t i = 0; i < a.shape(0); ++i) ds.samples.push_back({a(i, 0), a(i, 1), a(i, 2), a(i, 3)});
  return ds;
}

omega::AcceptanceRegion region_of(const std::optional<std::pair<double, double>>& r) {
  return r ? omega::AcceptanceRegion(r->first, r->second) : omega::AcceptanceRegion();
}

py::object region_tuple(const omega::AcceptanceRegion& r) {
  if (!r.calibrated()) return py::none();
  return py::make_tuple(r.theta_M(), r.theta_m());
}

}  // namespace

PYBIND11_MODULE(_sppnet, m) {
  m.doc() = "Thin-film SPP physics, dataset generation and cascade network training";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<SolverError>(m, "SolverError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<PipelineError>(m, "PipelineError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  // physics
  py::class_<physics::Wavevector>(m, "Wavevector")
      .def_readonly("beta", &physics::Wavevector::beta)
      .def_readonly("k0", &physics::Wavevector::k0)
      .def_readonly("bound", &physics::Wavevector::bound)
      .def("effective_index", &physics::Wavevector::effective_index);
  py::class_<physics::ThinFilmSolution>(m, "ThinFilmSolution")
      .def_readonly("wave", &physics::ThinFilmSolution::wave)
      .def_readonly("residual", &physics::ThinFilmSolution::residual)
      .def_readonly("iterations", &physics::ThinFilmSolution::iterations);

  m.def("molybdenum", [] {
    const auto p = physics::DrudeParams::molybdenum();
    return py::make_tuple(p.plasma_frequency, p.collision_rate, p.epsilon_inf);
  }, "(plasma_frequency, collision_rate, epsilon_inf) of the bundled Mo fit, rad/s");
  m.def(
      "drude_permittivity",
      [](double lambda0, std::optional<double> wp, std::optional<double> gamma, double eps_inf) {
        auto p = physics::DrudeParams::molybdenum();
        if (wp) p.plasma_frequency = *wp;
        if (gamma) p.collision_rate = *gamma;
        p.epsilon_inf = eps_inf;
        return physics::drude_permittivity(lambda0, p).value();
      },
      py::arg("lambda0"), py::arg("plasma_frequency") = py::none(), py::arg("collision_rate") = py::none(),
      py::arg("epsilon_inf") = 1.0, "Drude permittivity at vacuum wavelength lambda0 (m); defaults to molybdenum");
  m.def(
      "single_interface_beta",
      [](double eps_d, std::complex<double> eps_m, double lambda0) {
        return physics::single_interface_beta(eps_d, physics::ComplexPermittivity(eps_m), lambda0);
      },
      py::arg("eps_d"), py::arg("eps_m"), py::arg("lambda0"));
  m.def(
      "thin_film_beta",
      [](double eps_d, std::complex<double> eps_m, double thickness, double lambda0, const std::string& parity) {
        return physics::thin_film_beta(eps_d, physics::ComplexPermittivity(eps_m), thickness, lambda0,
                                       physics::parse_parity(parity));
      },
      py::arg("eps_d"), py::arg("eps_m"), py::arg("thickness"), py::arg("lambda0"),
      py::arg("parity") = "antisymmetric");
  m.def(
      "observe",
      [](double lambda0_nm, double t_nm, double eps_d, const std::string& parity) {
        physics::PhysicsConfig cfg;
        cfg.eps_d = eps_d;
        cfg.parity = physics::parse_parity(parity);
        const auto o = physics::observe(cfg, lambda0_nm * 1e-9, t_nm * 1e-9);
        py::dict d;
        d["lambda_spp_nm"] = o.lambda_spp * 1e9;
        d["L_spp_nm"] = o.length.infinite ? std::numeric_limits<double>::infinity() : o.length.meters * 1e9;
        d["beta"] = o.wave.beta;
        d["bound"] = o.wave.bound;
        return d;
      },
      py::arg("lambda0_nm"), py::arg("t_nm"), py::arg("eps_d") = 1.0, py::arg("parity") = "antisymmetric");

  // dataset
  py::class_<data::Dataset>(m, "Dataset")
      .def(py::init([](py::array_t<double, py::array::c_style | py::array::forcecast> a) { return dataset_from_array(a); }),
           py::arg("samples"))
      .def_property_readonly("samples", &samples_array)
      .def_property_readonly("normalized", &data::Dataset::normalized)
      .def_property_readonly("normalization",
                             [](const data::Dataset& ds) -> py::object {
                               if (!ds.normalization) return py::none();
                               py::list l;
                               for (const auto& c : ds.normalization->columns) l.append(py::make_tuple(c.min, c.max));
                               return l;
                             })
      .def("__len__", &data::Dataset::size)
      .def("normalize", [](const data::Dataset& ds) { return data::normalize(ds); })
      .def("denormalize", [](const data::Dataset& ds) { return data::denormalize(ds); })
      .def("save", [](const data::Dataset& ds, const std::filesystem::path& p) { data::save_csv(ds, p); });

  m.def("load_dataset", [](const std::filesystem::path& p) { return data::load_csv(p); });
  m.def(
      "generate_grid",
      [](std::optional<std::vector<double>> thicknesses, double lambda_min, double lambda_max, int n_lambda,
         double eps_d, const std::string& parity) {
        data::GridSpec spec;
        if (thicknesses) spec.thicknesses_nm = *thicknesses;
        spec.lambda_min_nm = lambda_min;
        spec.lambda_max_nm = lambda_max;
        spec.n_lambda = n_lambda;
        physics::PhysicsConfig cfg;
        cfg.eps_d = eps_d;
        cfg.parity = physics::parse_parity(parity);
        auto r = data::generate_grid(spec, cfg);
        std::vector<std::tuple<double, double, std::string>> excl;
        for (const auto& e : r.exclusions) excl.emplace_back(e.lambda0_nm, e.t_nm, e.reason);
        return py::make_tuple(std::move(r.dataset), excl);
      },
      py::arg("thicknesses") = py::none(), py::arg("lambda_min") = 400.0, py::arg("lambda_max") = 700.0,
      py::arg("n_lambda") = 101, py::arg("eps_d") = 1.0, py::arg("parity") = "antisymmetric",
      "Returns (dataset, [(lambda0_nm, t_nm, reason), ...])");
  m.def("split", &data::split, py::arg("dataset"), py::arg("train_fraction"), py::arg("seed"));

  // omega validation
  m.def("gaussian_window", &omega::gaussian_window, py::arg("n"), py::arg("sigma"));
  m.def(
      "windowed_fft", [](const std::vector<double>& x, double sigma) { return omega::windowed_fft(x, sigma); },
      py::arg("segment"), py::arg("sigma"));
  m.def(
      "compute_Mm",
      [](const std::vector<double>& pred, const std::vector<double>& train, double sigma) {
        const auto s = omega::compute_Mm(pred, train, sigma);
        return py::make_tuple(s.M, s.m);
      },
      py::arg("predicted"), py::arg("training"), py::arg("sigma"));
  m.def(
      "dominant_peak_width", [](const std::vector<double>& x) { return omega::dominant_peak_width(x); },
      py::arg("signal"));

  // cascade
  py::class_<omega::WindowLimits>(m, "WindowLimits")
      .def(py::init<>())
      .def_readwrite("min_delta_tau", &omega::WindowLimits::min_delta_tau)
      .def_readwrite("max_delta_tau", &omega::WindowLimits::max_delta_tau)
      .def_readwrite("target_delta_tau", &omega::WindowLimits::target_delta_tau)
      .def_readwrite("min_sigma", &omega::WindowLimits::min_sigma)
      .def_readwrite("component", &omega::WindowLimits::component);

  py::class_<cascade::CascadeNet>(m, "CascadeNet")
      .def_static("create", &cascade::CascadeNet::create, py::arg("seed"), py::arg("init_scale") = 0.5,
                  py::arg("limits") = omega::WindowLimits{})
      .def_static("zeros", [] { return cascade::CascadeNet::zeros(); })
      .def("flatten", &cascade::CascadeNet::flatten)
      .def("layer",
           [](const cascade::CascadeNet& net, const std::string& name) {
             for (auto b : cascade::kAllBlocks) {
               if (cascade::block_name(b) != name) continue;
               const auto& l = net.layer(b);
               py::array_t<double> w({l.fan_out(), l.fan_in()});
               std::copy(l.weights().begin(), l.weights().end(), w.mutable_data());
               return py::make_tuple(w, l.bias(), std::string(nn::to_string(l.activation())));
             }
             throw DomainError("unknown block '" + name + "'");
           })
      .def("stage1_forward",
           [](const cascade::CascadeNet& net, const std::vector<double>& x) {
             const auto r = cascade::stage1_forward(net, x);
             return py::make_tuple(r.output.output, r.window.delta_tau, r.window.sigma);
           })
      .def("__eq__", [](const cascade::CascadeNet& a, const cascade::CascadeNet& b) { return a == b; });

  // pipeline
  m.def(
      "train",
      [](const data::Dataset& ds, const cascade::CascadeNet& net, int epochs, double learning_rate,
         const std::string& mode, std::uint64_t seed, int warmup, double percentile) {
        pipeline::PipelineConfig cfg;
        cfg.epochs = epochs;
        cfg.learning_rate = learning_rate;
        cfg.seed = seed;
        cfg.warmup_epochs = warmup;
        cfg.percentile = percentile;
        cfg.record_trace = false;
        if (mode != "sequential" && mode != "parallel") throw DomainError("mode must be sequential or parallel");
        pipeline::RunResult r;
        {
          py::gil_scoped_release release;
          r = mode == "parallel" ? pipeline::run_parallel(ds, net, cfg) : pipeline::run_sequential(ds, net, cfg);
        }
        py::dict d;
        std::vector<double> mse, pass;
        for (const auto& e : r.metrics.epochs) {
          mse.push_back(e.mse);
          pass.push_back(e.pass_rate);
        }
        d["net"] = r.net;
        d["region"] = region_tuple(r.region);
        d["mse"] = mse;
        d["pass_rate"] = pass;
        d["final_mse"] = r.metrics.final_mse;
        d["accepted"] = r.metrics.total_accepted;
        d["stage2_updates"] = r.write_counts[static_cast<std::size_t>(cascade::Block::IIIb)];
        return d;
      },
      py::arg("dataset"), py::arg("net"), py::arg("epochs") = 50, py::arg("learning_rate") = 0.01,
      py::arg("mode") = "sequential", py::arg("seed") = 1, py::arg("warmup") = 1, py::arg("percentile") = 0.9,
      "Train on a normalized dataset; returns a dict with the trained net and metrics");
  m.def(
      "evaluate",
      [](const cascade::CascadeNet& net, std::pair<double, double> region, const data::Dataset& ds) {
        const auto ev = pipeline::evaluate(net, region_of(region), ds);
        py::array_t<double> out({ev.predictions.size(), cascade::kOutputDim});
        auto o = out.mutable_unchecked<2>();
        std::vector<bool> rejected;
        for (std::size_t i = 0; i < ev.predictions.size(); ++i) {
          o(i, 0) = ev.predictions[i].output[0];
          o(i, 1) = ev.predictions[i].output[1];
          rejected.push_back(ev.predictions[i].rejected);
        }
        py::dict d;
        d["outputs"] = out;
        d["rejected"] = rejected;
        d["mse"] = ev.mse;
        return d;
      },
      py::arg("net"), py::arg("region"), py::arg("dataset"));

  m.def(
      "save_model",
      [](const std::filesystem::path& path, const cascade::CascadeNet& net,
         std::optional<std::pair<double, double>> region, const data::Dataset& normalized_reference) {
        cascade::ModelFile f{net, region_of(region), normalized_reference.normalization, {}};
        cascade::save_model(f, path);
      },
      py::arg("path"), py::arg("net"), py::arg("region"), py::arg("normalized_dataset"));
  m.def("load_model", [](const std::filesystem::path& path) {
    const auto f = cascade::load_model(path);
    py::object norm = py::none();
    if (f.normalization) {
      py::list l;
      for (const auto& c : f.normalization->columns) l.append(py::make_tuple(c.min, c.max));
      norm = l;
    }
    return py::make_tuple(f.net, region_tuple(f.region), norm);
  });
}
