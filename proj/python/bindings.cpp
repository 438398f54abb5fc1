#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <random>

#include "teff/errors.hpp"
#include "teff/estimator.hpp"
#include "teff/field.hpp"
#include "teff/metrics.hpp"
#include "teff/registration.hpp"
#include "teff/synth.hpp"

namespace py = pybind11;
using namespace teff;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) float array -> FeatureMap copy.
FeatureMap to_map(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3)
    throw DimensionError("expected an (H, W) or (H, W, C) array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  return FeatureMap(h, w, c, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const FeatureMap& m) {
  FloatArray out({m.height(), m.width(), m.channels()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict pose_dict(const CameraPose& p) {
  py::dict d;
  d["theta"] = p.theta;
  d["phi"] = p.phi;
  d["gamma"] = p.gamma;
  d["r"] = p.r;
  return d;
}

Intrinsics intrinsics(int size, double fov_deg) {
  Intrinsics intr;
  intr.width = intr.height = size;
  intr.fov_y = deg_to_rad(fov_deg);
  return intr;
}

}  // namespace

PYBIND11_MODULE(_teffpose, m) {
  m.doc() = "Template feature-field pose estimation";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

  py::class_<FeatureField>(m, "FeatureField")
      .def_property_readonly("dims", &FeatureField::dims)
      .def_property_readonly("feature_channels", &FeatureField::feature_channels)
      .def("save", [](const FeatureField& f, const std::filesystem::path& p) { write_field(p, f); })
      .def_static("load", [](const std::filesystem::path& p) { return read_field(p); })
      .def("__eq__", [](const FeatureField& a, const FeatureField& b) { return a == b; });

  m.def(
      "make_template",
      [](std::uint64_t seed, int dims, int n_parts, double asymmetry, const std::string& mode) {
        TemplateSpec spec;
        spec.seed = seed;
        spec.dims = {dims, dims, dims};
        spec.n_parts = n_parts;
        spec.asymmetry = asymmetry;
        spec.feature_mode = parse_feature_mode(mode);
        return make_template(spec);
      },
      py::arg("seed") = 1, py::arg("dims") = 48, py::arg("n_parts") = 4,
      py::arg("asymmetry") = 1.0, py::arg("feature_mode") = "part-id");

  m.def(
      "make_instance",
      [](const FeatureField& tmpl, std::uint64_t seed, double strength, const std::string& follow) {
        return make_instance(tmpl, seed, strength, parse_feature_mode(follow));
      },
      py::arg("template"), py::arg("seed"), py::arg("strength"),
      py::arg("follow") = "part-id");

  m.def(
      "render",
      [](const FeatureField& field, double theta, double phi, double gamma, double r, int size,
         double fov_deg, int samples) {
        RenderConfig cfg;
        cfg.n_samples = samples;
        RenderOutput out;
        {
          py::gil_scoped_release release;
          out = render(field, CameraPose{theta, phi, gamma, r}, intrinsics(size, fov_deg), cfg);
        }
        py::dict d;
        d["feature"] = to_array(out.feature_map);
        d["color"] = to_array(out.color_map);
        d["depth"] = to_array(out.depth_map);
        d["alpha"] = to_array(out.alpha_map);
        return d;
      },
      py::arg("field"), py::arg("theta"), py::arg("phi"), py::arg("gamma") = 0.0,
      py::arg("r") = 4.0, py::arg("size") = 64, py::arg("fov") = 30.0, py::arg("samples") = 64);

  py::class_<PoseBank>(m, "PoseBank")
      .def("__len__", &PoseBank::size)
      .def_property_readonly("poses", [](const PoseBank& b) {
        py::list out;
        for (const auto& p : b.poses) out.append(pose_dict(p));
        return out;
      })
      .def("template", [](const PoseBank& b, std::size_t k) { return to_array(b.templates.at(k)); })
      .def("save", [](const PoseBank& b, const std::filesystem::path& p) { write_pose_bank(p, b); })
      .def_static("load", [](const std::filesystem::path& p) { return read_pose_bank(p); })
      .def(
          "estimate",
          [](PoseBank& bank, const FloatArray& query, double tau, int threads) {
            const FeatureMap q = to_map(query);
            const RegistrationConfig cfg;
            Estimate est;
            {
              py::gil_scoped_release release;
              if (!bank.prepared_for(cfg)) bank.prepare(cfg, threads);
              est = estimate_map(q, bank, cfg, tau, threads);
            }
            py::dict d = pose_dict(est.pose);
            d["index"] = est.match.index;
            d["mse"] = est.match.mse;
            d["probs"] = to_array(est.pdf.probs);
            std::vector<double> mse;
            for (const auto& mr : est.matches) mse.push_back(mr.mse);
            d["errors"] = to_array(mse);
            return d;
          },
          py::arg("query"), py::arg("tau") = 1.0, py::arg("threads") = 1);

  m.def(
      "build_bank",
      [](const FeatureField& field, int n_theta, int n_phi, double phi_lo_deg, double phi_hi_deg,
         double r_fixed, int size, double fov_deg, int threads) {
        PoseGrid grid;
        grid.n_theta = n_theta;
        grid.n_phi = n_phi;
        grid.phi_lo = deg_to_rad(phi_lo_deg);
        grid.phi_hi = deg_to_rad(phi_hi_deg);
        grid.r_fixed = r_fixed;
        py::gil_scoped_release release;
        return build_pose_bank(field, grid, intrinsics(size, fov_deg), RenderConfig{}, threads);
      },
      py::arg("field"), py::arg("n_theta") = 36, py::arg("n_phi") = 3, py::arg("phi_lo") = 85.0,
      py::arg("phi_hi") = 95.0, py::arg("r_fixed") = 4.0, py::arg("size") = 64,
      py::arg("fov") = 30.0, py::arg("threads") = 1);

  m.def(
      "pose_pdf",
      [](const std::vector<double>& errors, double tau) { return pose_pdf(errors, tau).probs; },
      py::arg("errors"), py::arg("tau"));

  m.def(
      "sample_indices",
      [](const std::vector<double>& probs, std::size_t n, std::uint64_t seed) {
        PoseDistribution pdf;
        pdf.probs = probs;
        std::mt19937_64 rng(seed);
        std::vector<std::size_t> out(n);
        for (auto& k : out) k = sample_index(pdf, rng);
        return out;
      },
      py::arg("probs"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "kl_divergence",
      [](const std::vector<double>& p, const std::vector<double>& q) { return kl_divergence(p, q); },
      py::arg("p"), py::arg("q"));

  m.def(
      "phase_correlate",
      [](const FloatArray& a, const FloatArray& b, bool subpixel) {
        const Translation t = phase_correlate(to_map(a), to_map(b), subpixel);
        return py::make_tuple(t.dx, t.dy, t.confidence);
      },
      py::arg("a"), py::arg("b"), py::arg("subpixel") = true);

  m.def(
      "estimate_scale_rotation",
      [](const FloatArray& tmpl, const FloatArray& target) {
        const FeatureMap a = to_map(tmpl), b = to_map(target);
        const auto hyp = estimate_scale_rotation(a, b, RegistrationConfig{});
        const Similarity2D best = warped_mse(a, hyp[1], b) < warped_mse(a, hyp[0], b) ? hyp[1] : hyp[0];
        return py::make_tuple(best.scale, best.rotation);
      },
      py::arg("template"), py::arg("target"));

  m.def(
      "warp",
      [](const FloatArray& map, double scale, double rotation) {
        return to_array(warp(to_map(map), Similarity2D{scale, rotation}));
      },
      py::arg("map"), py::arg("scale"), py::arg("rotation"));

  m.def("read_feature_map",
        [](const std::filesystem::path& p) { return to_array(read_feature_map(p)); });
  m.def("write_feature_map", [](const std::filesystem::path& p, const FloatArray& a) {
    write_feature_map(p, to_map(a));
  });
}
