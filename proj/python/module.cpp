#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pspc/composite.hpp"
#include "pspc/dataset.hpp"
#include "pspc/denoisers.hpp"
#include "pspc/diffusion.hpp"
#include "pspc/empirical.hpp"
#include "pspc/errors.hpp"
#include "pspc/patch_geometry.hpp"
#include "pspc/sampler.hpp"
#include "pspc/sensitivity.hpp"
#include "pspc/tensor_file.hpp"

namespace py = pybind11;
using namespace pspc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const Array& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

py::array_t<double> to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
    py::array_t<double> out(shape);
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::array_t<double> image_array(const std::vector<double>& v, const ImageShape& s) {
    return to_array(v, {static_cast<py::ssize_t>(s.height), static_cast<py::ssize_t>(s.width),
                        static_cast<py::ssize_t>(s.channels)});
}

void require_size(const Array& z, std::size_t dim, const char* what) {
    if (static_cast<std::size_t>(z.size()) != dim)
        throw ShapeMismatch(std::string(what) + ": expected " + std::to_string(dim) + " values, got " +
                            std::to_string(z.size()));
}

std::shared_ptr<const ImageDataset> dataset_from_array(const Array& images, const std::string& name) {
    if (images.ndim() != 4) throw ShapeMismatch("images must have shape (N, H, W, C)");
    const ImageShape shape{static_cast<std::size_t>(images.shape(1)), static_cast<std::size_t>(images.shape(2)),
                           static_cast<std::size_t>(images.shape(3))};
    const auto v = view(images);
    return std::make_shared<const ImageDataset>(name, shape, std::vector<double>(v.begin(), v.end()));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Empirical optimal and patch-composite denoisers for variance-exploding diffusion";

    auto base = py::register_exception<Error>(m, "PspcError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<ShapeMismatch>(m, "ShapeMismatch", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<RangeError>(m, "RangeError", base.ptr());
    py::register_exception<EmptyDataset>(m, "EmptyDataset", base.ptr());
    py::register_exception<DegenerateHeatmap>(m, "DegenerateHeatmap", base.ptr());
    py::register_exception<UncoveredPixel>(m, "UncoveredPixel", base.ptr());
    py::register_exception<MissingData>(m, "MissingData", base.ptr());

    py::class_<ImageDataset, std::shared_ptr<ImageDataset>>(m, "Dataset")
        .def(py::init([](const Array& images, const std::string& name) {
                 return std::const_pointer_cast<ImageDataset>(dataset_from_array(images, name));
             }),
             py::arg("images"), py::arg("name") = "array")
        .def_static(
            "load",
            [](const std::string& path, bool u8) {
                return std::make_shared<ImageDataset>(
                    load_dataset(path, u8 ? Normalization::u8_to_unit : Normalization::none));
            },
            py::arg("path"), py::arg("u8") = true)
        .def_property_readonly("name", &ImageDataset::name)
        .def_property_readonly("hash", &ImageDataset::hash)
        .def_property_readonly("shape",
                               [](const ImageDataset& d) {
                                   return py::make_tuple(d.size(), d.shape().height, d.shape().width,
                                                         d.shape().channels);
                               })
        .def("__len__", &ImageDataset::size)
        .def("images", [](const ImageDataset& d) {
            const auto v = d.values();
            return to_array({v.begin(), v.end()},
                            {static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(d.shape().height),
                             static_cast<py::ssize_t>(d.shape().width), static_cast<py::ssize_t>(d.shape().channels)});
        });

    py::class_<Denoiser, std::shared_ptr<Denoiser>>(m, "Denoiser")
        .def_property_readonly("kind", &Denoiser::kind)
        .def("describe", &Denoiser::describe)
        .def("__call__",
             [](const Denoiser& d, const Array& z, double t) {
                 require_size(z, d.shape().size(), "denoise");
                 Image x;
                 {
                     py::gil_scoped_release release;
                     x = d.denoise(view(z), t);
                 }
                 return image_array(x, d.shape());
             },
             py::arg("z"), py::arg("t"));

    m.def(
        "make_denoiser",
        [](const std::string& spec, std::shared_ptr<ImageDataset> dataset) {
            DenoiserContext ctx;
            ctx.dataset = dataset;
            return std::const_pointer_cast<Denoiser>(make_denoiser(spec, ctx));
        },
        py::arg("spec"), py::arg("dataset"),
        "Spec strings: optimal[:K], gaussian, patch:S, pspc-square:S|csv, pspc-flex:L|csv[:maps], external:path, "
        "constant:C");

    m.def(
        "optimal_denoise",
        [](const ImageDataset& ds, const Array& z, double t, std::optional<std::size_t> top_k) {
            require_size(z, ds.dim(), "optimal_denoise");
            return image_array(optimal_denoise(ds, view(z), t, top_k), ds.shape());
        },
        py::arg("dataset"), py::arg("z"), py::arg("t"), py::arg("top_k") = py::none());

    m.def(
        "posterior_weights",
        [](const ImageDataset& ds, const Array& z, double t) {
            require_size(z, ds.dim(), "posterior_weights");
            const auto w = posterior_weights(ds, view(z), t);
            std::vector<double> dense(ds.size(), 0.0);
            for (std::size_t k = 0; k < w.indices.size(); ++k) dense[w.indices[k]] = w.weights[k];
            return to_array(dense, {static_cast<py::ssize_t>(ds.size())});
        },
        py::arg("dataset"), py::arg("z"), py::arg("t"));

    m.def(
        "pspc_square",
        [](const ImageDataset& ds, const Array& z, double t, std::size_t side) {
            require_size(z, ds.dim(), "pspc_square");
            return image_array(pspc_square(ds, view(z), t, SizeSchedule::constant(side)), ds.shape());
        },
        py::arg("dataset"), py::arg("z"), py::arg("t"), py::arg("side"));

    m.def(
        "pspc_flex",
        [](const ImageDataset& ds, const Array& z, double t, const Array& maps, double lambda) {
            require_size(z, ds.dim(), "pspc_flex");
            return image_array(pspc_flex(ds, view(z), t, view(maps), LambdaSchedule::constant(lambda)), ds.shape());
        },
        py::arg("dataset"), py::arg("z"), py::arg("t"), py::arg("maps"), py::arg("lam"));

    m.def(
        "flex_crop",
        [](const Array& heatmap, double lambda) {
            if (heatmap.ndim() != 2) throw ShapeMismatch("heatmap must be 2-D");
            const auto crop = flex_crop(view(heatmap), static_cast<std::size_t>(heatmap.shape(0)),
                                        static_cast<std::size_t>(heatmap.shape(1)), {0, 0}, lambda);
            std::vector<std::pair<std::size_t, std::size_t>> out;
            for (const auto& p : crop.pixels) out.emplace_back(p.row, p.col);
            return out;
        },
        py::arg("heatmap"), py::arg("lam"));

    m.def(
        "edm_schedule",
        [](std::size_t n, double sigma_min, double sigma_max, double rho) {
            const auto s = edm_schedule(DiffusionProcess{sigma_min, sigma_max, rho}, n);
            return to_array(s.ts, {static_cast<py::ssize_t>(s.ts.size())});
        },
        py::arg("n"), py::arg("sigma_min") = 0.002, py::arg("sigma_max") = 80.0, py::arg("rho") = 7.0);

    m.def(
        "sample_prior",
        [](const ImageDataset& ds, std::size_t count, std::uint64_t seed, double sigma_max) {
            const auto& s = ds.shape();
            return to_array(sample_prior(ds.dim(), sigma_max, count, seed),
                            {static_cast<py::ssize_t>(count), static_cast<py::ssize_t>(s.height),
                             static_cast<py::ssize_t>(s.width), static_cast<py::ssize_t>(s.channels)});
        },
        py::arg("dataset"), py::arg("count"), py::arg("seed"), py::arg("sigma_max") = 80.0);

    m.def(
        "sample",
        [](const Denoiser& d, const Array& ts, const Array& z, const std::string& solver, bool capture) {
            require_size(z, d.shape().size(), "sample");
            const auto tv = view(ts);
            TimeSchedule schedule{{tv.begin(), tv.end()}, "python"};
            Trajectory tr;
            {
                py::gil_scoped_release release;
                tr = pspc::sample(d, schedule, view(z), parse_solver(solver), capture);
            }
            py::dict out;
            out["final"] = image_array(tr.final_sample, d.shape());
            out["denoiser_calls"] = tr.denoiser_calls;
            if (capture) {
                const auto& s = d.shape();
                std::vector<double> zs, xs;
                for (const auto& f : tr.z) zs.insert(zs.end(), f.begin(), f.end());
                for (const auto& f : tr.x_hat) xs.insert(xs.end(), f.begin(), f.end());
                const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(tr.z.size()),
                                                     static_cast<py::ssize_t>(s.height),
                                                     static_cast<py::ssize_t>(s.width),
                                                     static_cast<py::ssize_t>(s.channels)};
                out["z"] = to_array(zs, shape);
                out["x_hat"] = to_array(xs, shape);
                out["times"] = to_array(tr.times, {static_cast<py::ssize_t>(tr.times.size())});
            }
            return out;
        },
        py::arg("denoiser"), py::arg("ts"), py::arg("z"), py::arg("solver") = "heun", py::arg("capture") = false);

    m.def(
        "sensitivity_map",
        [](const Denoiser& d, const ImageDataset& ds, double t, std::size_t n_samples, std::uint64_t seed) {
            SensitivityMap smap;
            {
                py::gil_scoped_release release;
                smap = sensitivity_map(d, ds, t, n_samples, seed);
            }
            const auto H = static_cast<py::ssize_t>(smap.height), W = static_cast<py::ssize_t>(smap.width);
            return to_array(smap.values, {H, W, H, W});
        },
        py::arg("denoiser"), py::arg("dataset"), py::arg("t"), py::arg("n_samples"), py::arg("seed") = 0);

    m.def(
        "concentration_side_length",
        [](const Array& map, std::size_t row, std::size_t col, double p) {
            if (map.ndim() != 2) throw ShapeMismatch("map must be 2-D");
            return concentration_side_length(view(map), static_cast<std::size_t>(map.shape(0)),
                                             static_cast<std::size_t>(map.shape(1)),
                                             Pixel{static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(col)},
                                             p);
        },
        py::arg("map"), py::arg("row"), py::arg("col"), py::arg("p"));

    m.def(
        "read_tensor",
        [](const std::string& path) {
            const auto t = read_tensor_file(path);
            return to_array(t.values, std::vector<py::ssize_t>(t.dims.begin(), t.dims.end()));
        },
        py::arg("path"));

    m.def(
        "write_tensor",
        [](const std::string& path, const Array& a, bool f32) {
            Tensor t;
            for (py::ssize_t i = 0; i < a.ndim(); ++i) t.dims.push_back(static_cast<std::uint64_t>(a.shape(i)));
            const auto v = view(a);
            t.values.assign(v.begin(), v.end());
            t.dtype = f32 ? DType::f32 : DType::f64;
            write_tensor_file(path, t);
        },
        py::arg("path"), py::arg("array"), py::arg("f32") = false);
}
