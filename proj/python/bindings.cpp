#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ssn/assembly.hpp"
#include "ssn/errors.hpp"
#include "ssn/io.hpp"
#include "ssn/likelihood.hpp"
#include "ssn/lowrank_mvn.hpp"
#include "ssn/metrics.hpp"
#include "ssn/toy.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const ssn::Tensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

ssn::Tensor to_tensor(const Array& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return ssn::Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<double> to_vector(const Array& a) {
  return std::vector<double>(a.data(), a.data() + a.size());
}

py::dict report_dict(const ssn::MetricReport& r) {
  py::dict d;
  d["ged_squared"] = r.ged_squared;
  d["diversity"] = r.diversity;
  d["cross_term"] = r.cross_term;
  d["gt_self_term"] = r.gt_self_term;
  return d;
}

py::dict grad_dict(const ssn::ParamGrad& g) {
  py::dict d;
  d["mean"] = to_numpy(g.mean);
  d["factor"] = to_numpy(g.factor);
  d["diag_raw"] = to_numpy(g.diag_raw);
  return d;
}

ssn::toy::CovarianceMode parse_mode(const std::string& mode) {
  if (mode == "lowrank") return ssn::toy::CovarianceMode::lowrank;
  if (mode == "diagonal") return ssn::toy::CovarianceMode::diagonal;
  throw ssn::ValidationError("mode must be \"lowrank\" or \"diagonal\"");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Low-rank Gaussian logit distributions, Monte-Carlo loss, metrics and the toy experiment.";

  auto base = py::register_exception<ssn::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ssn::ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ssn::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ssn::NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ssn::OverflowError>(m, "OverflowError", base.ptr());
  py::register_exception<ssn::DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<ssn::SizeGuardError>(m, "SizeGuardError", base.ptr());
  py::register_exception<ssn::IoError>(m, "IoError", base.ptr());

  py::class_<ssn::LowRankGaussian>(m, "LowRankGaussian")
      .def(py::init([](const Array& mean, const Array& factor, const Array& diag_raw,
                       std::size_t pixels, std::size_t classes, std::size_t rank) {
             return ssn::LowRankGaussian(to_tensor(mean), to_tensor(factor), to_tensor(diag_raw),
                                         pixels, classes, rank);
           }),
           py::arg("mean"), py::arg("factor"), py::arg("diag_raw"), py::arg("pixels"),
           py::arg("classes"), py::arg("rank"))
      .def_property_readonly("pixels", &ssn::LowRankGaussian::pixels)
      .def_property_readonly("classes", &ssn::LowRankGaussian::classes)
      .def_property_readonly("rank", &ssn::LowRankGaussian::rank)
      .def_property_readonly("dim", &ssn::LowRankGaussian::dim)
      .def_property_readonly("mean", [](const ssn::LowRankGaussian& d) { return to_numpy(d.mean()); })
      .def_property_readonly("factor",
                             [](const ssn::LowRankGaussian& d) { return to_numpy(d.factor()); })
      .def_property_readonly("diag_raw",
                             [](const ssn::LowRankGaussian& d) { return to_numpy(d.diag_raw()); })
      .def_property_readonly("effective_diag", [](const ssn::LowRankGaussian& d) {
        return to_numpy(d.effective_diag());
      })
      .def(py::self == py::self);

  py::class_<ssn::LabelMap>(m, "LabelMap")
      .def(py::init([](std::vector<int> labels, int num_classes,
                       std::optional<std::vector<std::uint8_t>> mask,
                       std::vector<std::size_t> shape) {
             return ssn::LabelMap(std::move(labels), num_classes, std::move(mask), std::move(shape));
           }),
           py::arg("labels"), py::arg("num_classes"), py::arg("mask") = py::none(),
           py::arg("shape") = std::vector<std::size_t>{})
      .def_property_readonly("labels", &ssn::LabelMap::labels)
      .def_property_readonly("num_classes", &ssn::LabelMap::num_classes)
      .def_property_readonly("mask", &ssn::LabelMap::mask)
      .def_property_readonly("shape", &ssn::LabelMap::shape)
      .def("__len__", &ssn::LabelMap::pixels)
      .def(py::self == py::self);

  m.def("log_prob", [](const ssn::LowRankGaussian& d, const Array& x) {
    return ssn::log_prob(d, to_vector(x));
  });
  m.def("dense_log_prob", [](const ssn::LowRankGaussian& d, const Array& x) {
    return ssn::dense_log_prob(d, to_vector(x));
  });
  m.def("dense_covariance",
        [](const ssn::LowRankGaussian& d) { return to_numpy(ssn::dense_covariance(d)); });
  m.def("marginal_variance",
        [](const ssn::LowRankGaussian& d) { return to_numpy(ssn::marginal_variance(d)); });
  m.def(
      "sample",
      [](const ssn::LowRankGaussian& d, std::size_t n, std::uint64_t seed) {
        return to_numpy(ssn::sample(d, n, seed).values);
      },
      py::arg("dist"), py::arg("n"), py::arg("seed") = 0, "Logit samples as an [n, S*C] array.");

  m.def(
      "ssn_mc_loss",
      [](const ssn::LowRankGaussian& d, const ssn::LabelMap& y, std::size_t samples,
         std::uint64_t seed) { return ssn::ssn_mc_loss(d, y, samples, seed).value; },
      py::arg("dist"), py::arg("labels"), py::arg("samples"), py::arg("seed") = 0);
  m.def(
      "ssn_mc_loss_and_grad",
      [](const ssn::LowRankGaussian& d, const ssn::LabelMap& y, std::size_t samples,
         std::uint64_t seed) {
        auto [loss, grad] = ssn::ssn_mc_loss_and_grad(d, y, ssn::draw_noise(d, samples, seed));
        return py::make_tuple(loss.value, grad_dict(grad));
      },
      py::arg("dist"), py::arg("labels"), py::arg("samples"), py::arg("seed") = 0,
      "Loss and gradient dict (mean, factor, diag_raw) on the same noise.");
  m.def(
      "gradient_check",
      [](std::size_t trials, std::uint64_t seed) {
        const auto r = ssn::gradient_check(trials, seed);
        py::dict d;
        d["trials"] = r.trials;
        d["coordinates"] = r.coordinates;
        d["failures"] = r.failures;
        d["worst_relative_error"] = r.worst_relative_error;
        d["worst_absolute_error"] = r.worst_absolute_error;
        d["passed"] = r.passed();
        return d;
      },
      py::arg("trials") = 50, py::arg("seed") = 0);

  m.def("iou_distance", &ssn::iou_distance);
  m.def("ged_squared", [](std::vector<ssn::LabelMap> gt, std::vector<ssn::LabelMap> pred) {
    return report_dict(ssn::ged_squared(ssn::SampleSet(std::move(gt), ssn::SampleSource::ground_truth),
                                        ssn::SampleSet(std::move(pred), ssn::SampleSource::model)));
  });
  m.def("sample_diversity", [](std::vector<ssn::LabelMap> pred) {
    return ssn::sample_diversity(ssn::SampleSet(std::move(pred), ssn::SampleSource::model)).value;
  });
  m.def("dsc", &ssn::dsc, py::arg("pred"), py::arg("gt"), py::arg("cls"));

  m.def(
      "apply_deviation_scale",
      [](const ssn::LowRankGaussian& d, std::vector<double> per_class, double temperature) {
        return ssn::apply_deviation_scale(d, {std::move(per_class), temperature});
      },
      py::arg("dist"), py::arg("per_class"), py::arg("temperature") = 1.0);
  m.def("most_likely_prediction", &ssn::most_likely_prediction);

  m.def(
      "train_toy",
      [](const std::string& mode, std::size_t rank, std::uint64_t seed, std::size_t iterations,
         std::size_t mc_samples, std::size_t pretrain_iterations, double learning_rate,
         std::size_t eval_lik_samples) {
        ssn::toy::TrainConfig c;
        c.rank = rank;
        c.seed = seed;
        c.iterations = iterations;
        c.mc_samples = mc_samples;
        c.pretrain_iterations = pretrain_iterations;
        c.learning_rate = learning_rate;
        c.eval_lik_samples = eval_lik_samples;
        const auto covariance_mode = parse_mode(mode);
        std::optional<ssn::toy::TrainReport> report;
        {
          py::gil_scoped_release release;
          report.emplace(ssn::toy::train_toy(c, covariance_mode));
        }
        const auto& r = *report;
        py::dict d;
        d["checkpoint"] = r.checkpoint;
        d["final_nll_per_map"] = r.final_nll_per_map;
        d["stop_reason"] = ssn::toy::to_string(r.stop_reason);
        d["stop_detail"] = r.stop_detail;
        d["joint_iterations_run"] = r.joint_iterations_run;
        d["loss_trace"] = r.loss_trace;
        d["phase_boundary"] = r.phase_boundary;
        return d;
      },
      py::arg("mode") = "lowrank", py::arg("rank") = 2, py::arg("seed") = 0,
      py::arg("iterations") = 10000, py::arg("mc_samples") = 200,
      py::arg("pretrain_iterations") = 2000, py::arg("learning_rate") = 0.2,
      py::arg("eval_lik_samples") = 10000);
  m.def(
      "evaluate_toy",
      [](const ssn::LowRankGaussian& model, std::size_t n_samples, std::size_t n_lik,
         std::uint64_t seed) {
        const auto e = ssn::toy::evaluate_toy(model, n_samples, n_lik, seed);
        py::dict d;
        d["nll_per_map"] = e.nll_per_map;
        d["nll_by_map"] = e.nll_by_map;
        d["samples"] = e.samples;
        d["map_counts"] = e.map_counts;
        d["diversity"] = e.diversity;
        d["ged"] = report_dict(e.ged);
        d["covariance"] = to_numpy(e.covariance);
        py::list hist;
        for (const auto& h : e.histogram) hist.append(py::make_tuple(h.pattern, h.count));
        d["histogram"] = hist;
        return d;
      },
      py::arg("model"), py::arg("n_samples") = 10000, py::arg("n_lik_samples") = 10000,
      py::arg("seed") = 0);

  m.def("save_ssnt", &ssn::io::save_ssnt, py::arg("path"), py::arg("dist"));
  m.def("load_ssnt", &ssn::io::load_ssnt, py::arg("path"));
}
