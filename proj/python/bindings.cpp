// Python bindings: numpy float32 arrays in and out, JSON-shaped dicts for configs.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <nlohmann/json.hpp>

#include "bmtk/app/pipeline.hpp"
#include "bmtk/errors.hpp"
#include "bmtk/io/container.hpp"
#include "bmtk/metrics/metrics.hpp"
#include "bmtk/reg/registration.hpp"
#include "bmtk/vae/checkpoint.hpp"
#include "bmtk/vae/loss.hpp"

namespace py = pybind11;
using namespace bmtk;
using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

namespace {

Tensor to_tensor(const Array& a) {
  Shape s(a.shape(), a.shape() + a.ndim());
  Tensor t(s);
  if (t.size()) std::memcpy(t.data(), a.data(), t.size() * sizeof(float));
  return t;
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> s(t.shape().begin(), t.shape().end());
  Array a(s);
  if (t.size()) std::memcpy(a.mutable_data(), t.data(), t.size() * sizeof(float));
  return a;
}

Mask to_mask(const Array& a) { return Mask::from_tensor(to_tensor(a)); }

// dicts go through a JSON round trip so the strict config parsers apply
nlohmann::json to_json(const py::object& o) {
  if (o.is_none()) return nlohmann::json::object();
  const auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(o).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_bmtk, m) {
  m.doc() = "Biomechanics-informed cardiac motion tracking toolkit";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ManifestError>(m, "ManifestError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def("read_tensor", [](const std::filesystem::path& p) { return to_array(io::read_tensor(p)); }, py::arg("path"));
  m.def(
      "write_tensor",
      [](const std::filesystem::path& p, const Array& a, const py::object& sidecar) {
        io::write_tensor(p, to_tensor(a), sidecar.is_none() ? nlohmann::json() : to_json(sidecar));
      },
      py::arg("path"), py::arg("array"), py::arg("sidecar") = py::none());

  m.def("omega_weights", &vae::omega_weights, py::arg("frames"), py::arg("es_frame") = 20);

  m.def(
      "simulate_subject",
      [](const py::object& config, int index) {
        const app::CohortConfig cfg = app::cohort_from_json(to_json(config));
        app::Subject s;
        {
          py::gil_scoped_release nogil;
          s = app::make_subject(cfg, index);
        }
        py::dict d;
        d["name"] = s.name;
        d["fields"] = to_array(s.sim.sequence.fields);
        d["masks"] = to_array(s.sim.masks);
        d["cine"] = to_array(s.cine);
        d["ed_myocardium"] = to_array(s.sim.ed_myocardium.to_tensor());
        d["ed_cavity"] = to_array(s.sim.ed_cavity.to_tensor());
        d["pressure_kpa"] = s.sim.schedule.pressure_kpa;
        d["target_area_px2"] = s.sim.schedule.target_area_px2;
        d["achieved_area_px2"] = s.sim.schedule.achieved_area_px2;
        d["spacing_mm"] = s.sim.sequence.spacing_mm;
        return d;
      },
      py::arg("config") = py::none(), py::arg("index") = 0,
      "Simulate cohort member `index`; config keys as in the simulate stage JSON.");

  py::class_<vae::VaeCheckpoint>(m, "Checkpoint")
      .def_static("load", &vae::load_checkpoint, py::arg("path"))
      .def_property_readonly("latent_dim", [](const vae::VaeCheckpoint& c) { return c.arch.latent_dim; })
      .def_property_readonly("grid", [](const vae::VaeCheckpoint& c) { return py::make_tuple(c.arch.rows, c.arch.cols); })
      .def_property_readonly("architecture",
                             [](const vae::VaeCheckpoint& c) { return from_json(vae::architecture_to_json(c.arch)); })
      .def_property_readonly("training", [](const vae::VaeCheckpoint& c) { return from_json(c.training); })
      .def("encode",
           [](const vae::VaeCheckpoint& c, const Array& fields) {
             const auto e = c.model().encode(to_tensor(fields));
             return py::make_tuple(to_array(e.mu), to_array(e.logvar));
           })
      .def("decode", [](const vae::VaeCheckpoint& c, const Array& z) { return to_array(c.model().decode(to_tensor(z))); })
      .def("save", [](const vae::VaeCheckpoint& c, const std::filesystem::path& p) { vae::save_checkpoint(p, c); });

  m.def(
      "train",
      [](const std::vector<Array>& sequences, const py::object& config) {
        const vae::TrainConfig cfg = app::train_config_from_json(to_json(config));
        std::vector<Tensor> seqs;
        for (const auto& a : sequences) seqs.push_back(to_tensor(a));
        py::gil_scoped_release nogil;
        return vae::train(seqs, cfg);
      },
      py::arg("sequences"), py::arg("config") = py::none(),
      "Train on T x 2 x M x N displacement sequences; config keys as in the train stage JSON.");

  m.def(
      "register_sequence",
      [](const Array& images, const Array& mask, const vae::VaeCheckpoint& ck, const py::object& config) {
        const reg::RegistrationConfig cfg = app::registration_from_json(to_json(config));
        const Tensor im = to_tensor(images);
        const Mask myo = to_mask(mask);
        reg::TrackingResult r;
        {
          py::gil_scoped_release nogil;
          r = reg::register_sequence(im, myo, ck.model(), cfg);
        }
        py::dict d;
        d["fields"] = to_array(r.fields.fields);
        d["z"] = to_array(r.z);
        d["objective"] = r.trace;
        d["iterations"] = r.iterations;
        d["best_iteration"] = r.best_iteration;
        d["converged"] = r.converged;
        return d;
      },
      py::arg("images"), py::arg("ed_myocardium"), py::arg("checkpoint"), py::arg("config") = py::none());

  m.def("dilate_mask", [](const Array& a, int r) { return to_array(reg::dilate_mask(to_mask(a), r).to_tensor()); });
  m.def("dice", [](const Array& a, const Array& b) { return metrics::dice(to_mask(a), to_mask(b)); });
  m.def("mcd", [](const Array& a, const Array& b, double sp) { return metrics::mcd(to_mask(a), to_mask(b), sp); },
        py::arg("a"), py::arg("b"), py::arg("spacing_mm") = 1.8);
  m.def("jacobian_determinant", [](const Array& f) { return to_array(metrics::jacobian_determinant(to_tensor(f))); });
  m.def("jacobian_metric",
        [](const Array& f, const Array& mask) { return metrics::jacobian_metric(to_tensor(f), to_mask(mask)); });
  m.def(
      "strain_curves",
      [](const Array& fields, const Array& myocardium) {
        const Mask myo = to_mask(myocardium);
        sim::DeformationSequence seq;
        seq.fields = to_tensor(fields);
        const auto c = metrics::strain_curves(seq, metrics::lv_centroid(myo, metrics::enclosed_region(myo)), myo);
        py::dict d;
        d["rr_pct"] = c.rr_pct;
        d["cc_pct"] = c.cc_pct;
        d["peak_rr_frame"] = c.peak_rr_frame;
        d["peak_cc_frame"] = c.peak_cc_frame;
        return d;
      },
      py::arg("fields"), py::arg("ed_myocardium"));
  m.def("evaluate_sequence", [](const Array& fields, const Array& masks, double sp) {
    py::list rows;
    for (const auto& f : metrics::evaluate_sequence(to_tensor(fields), to_tensor(masks), sp)) {
      rows.append(py::dict(py::arg("frame") = f.frame, py::arg("dice") = f.dice, py::arg("mcd_mm") = f.mcd_mm,
                           py::arg("jac_metric") = f.jac_metric));
    }
    return rows;
  }, py::arg("fields"), py::arg("masks"), py::arg("spacing_mm") = 1.8);
}
