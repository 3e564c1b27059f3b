#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "latentmark/attack_suite.hpp"
#include "latentmark/metric_suite.hpp"
#include "latentmark/payload_codec.hpp"
#include "latentmark/pipeline.hpp"
#include "latentmark/scenegen.hpp"
#include "latentmark/stub_backend.hpp"
#include "latentmark/watermark_nets.hpp"

namespace py = pybind11;
using namespace latentmark;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        shape.push_back(static_cast<int>(a.shape(i)));
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

py::array_t<float> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> a(shape);
    std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
    return a;
}

AttackSpec spec_from_args(const std::string& kind, double intensity, std::uint64_t seed) {
    AttackSpec spec{attack_kind_from_name(kind), intensity, seed};
    spec.validate();
    return spec;
}

} // namespace

PYBIND11_MODULE(_latentmark, m) {
    m.doc() = "latent-space watermarking core";

    py::class_<MetadataRecord>(m, "MetadataRecord")
        .def(py::init<>())
        .def(py::init([](std::string prompt, int user_id, std::string timestamp) {
                 MetadataRecord r{std::move(prompt), user_id, std::move(timestamp)};
                 r.validate();
                 return r;
             }),
             py::arg("prompt"), py::arg("user_id"), py::arg("timestamp"))
        .def_readwrite("prompt", &MetadataRecord::prompt)
        .def_readwrite("user_id", &MetadataRecord::user_id)
        .def_readwrite("timestamp", &MetadataRecord::timestamp);

    py::class_<GlyphLayout>(m, "GlyphLayout")
        .def(py::init<>())
        .def_readwrite("glyph_scale", &GlyphLayout::glyph_scale)
        .def_readwrite("blank_tau", &GlyphLayout::blank_tau)
        .def_property_readonly("capacity", &GlyphLayout::capacity);

    py::class_<DecodedPayload>(m, "DecodedPayload")
        .def_readonly("text", &DecodedPayload::text)
        .def_readonly("fields_recovered", &DecodedPayload::fields_recovered)
        .def_property_readonly("fields",
                               [](const DecodedPayload& p) -> py::object {
                                   if (!p.fields) return py::none();
                                   return py::cast(*p.fields);
                               })
        .def_property_readonly("glyph_count", &DecodedPayload::glyph_count)
        .def_property_readonly("mean_confidence", &DecodedPayload::mean_confidence);

    m.def("render_payload",
          [](const MetadataRecord& meta, const GlyphLayout& layout) {
              return array_from_tensor(render_payload(meta, layout));
          },
          py::arg("meta"), py::arg("layout") = GlyphLayout{});
    m.def("decode_payload",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& img,
             const GlyphLayout& layout) { return decode_payload(tensor_from_array(img), layout); },
          py::arg("image"), py::arg("layout") = GlyphLayout{});
    m.def("binarize",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& img,
             float threshold) { return array_from_tensor(binarize(tensor_from_array(img), threshold)); },
          py::arg("image"), py::arg("threshold") = 0.5f);
    m.def("edit_distance", [](const std::string& a, const std::string& b) {
        return edit_distance(a, b);
    });
    m.def("character_edit_ratio", [](const std::vector<std::pair<long, long>>& records) {
        return character_edit_ratio(records);
    });

    py::class_<FusionConfig>(m, "FusionConfig")
        .def(py::init([](float alpha, int kappa) {
                 FusionConfig f{alpha, kappa};
                 f.validate();
                 return f;
             }),
             py::arg("alpha") = 0.05f, py::arg("kappa") = 3)
        .def_readwrite("alpha", &FusionConfig::alpha)
        .def_readwrite("kappa", &FusionConfig::kappa);

    m.def("fuse_latent",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& z,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& rho,
             const FusionConfig& cfg) {
              return array_from_tensor(fuse_latent(tensor_from_array(z), tensor_from_array(rho), cfg));
          },
          py::arg("latent"), py::arg("rho"), py::arg("config") = FusionConfig{});

    m.def("apply_attack",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& img,
             const std::string& kind, double intensity, std::uint64_t seed) {
              return array_from_tensor(
                  apply_attack(tensor_from_array(img), spec_from_args(kind, intensity, seed)));
          },
          py::arg("image"), py::arg("kind"), py::arg("intensity"), py::arg("seed") = 0);

    m.def("psnr",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& y, double peak) {
              return psnr(tensor_from_array(x), tensor_from_array(y), peak);
          },
          py::arg("x"), py::arg("y"), py::arg("peak") = 1.0);
    m.def("ssim", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
                     const py::array_t<float, py::array::c_style | py::array::forcecast>& y) {
        return ssim(tensor_from_array(x), tensor_from_array(y));
    });
    m.def("normalized_correlation",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& y) {
              return normalized_correlation(tensor_from_array(x), tensor_from_array(y));
          });

    m.def("render_scene",
          [](std::uint64_t key, int size) { return array_from_tensor(render_scene(key, size)); },
          py::arg("key"), py::arg("size") = 512);
    m.def("scene_caption", &scene_caption, py::arg("key"));
    m.def("count_parameters", []() { return count_parameters(WatermarkNetSpec{}); });

    py::class_<WatermarkModel>(m, "WatermarkModel")
        .def(py::init<>())
        .def_static("load", [](const std::string& path) {
            return WatermarkModel::load_checkpoint(path);
        })
        .def("save", [](const WatermarkModel& model, const std::string& path) {
            model.save_checkpoint(path);
        })
        .def("encode_watermark",
             [](WatermarkModel& model,
                const py::array_t<float, py::array::c_style | py::array::forcecast>& w) {
                 return array_from_tensor(model.encode_watermark(tensor_from_array(w)));
             })
        .def("extract_watermark",
             [](WatermarkModel& model,
                const py::array_t<float, py::array::c_style | py::array::forcecast>& img) {
                 return array_from_tensor(model.extract_watermark(tensor_from_array(img)));
             })
        .def_property_readonly("parameter_count", &WatermarkModel::parameter_count)
        .def_property_readonly("fusion", [](WatermarkModel& model) { return model.fusion(); });

    py::class_<DiffusionBackend>(m, "DiffusionBackend")
        .def_property_readonly("identifier", &DiffusionBackend::identifier)
        .def_property_readonly("weight_hash", &DiffusionBackend::weight_hash)
        .def("denoise_to_latent",
             [](const DiffusionBackend& be, const std::string& prompt, int steps,
                std::uint64_t seed) {
                 return array_from_tensor(be.denoise_to_latent(prompt, steps, seed));
             },
             py::arg("prompt"), py::arg("steps") = 30, py::arg("seed") = 0)
        .def("decode_latent",
             [](const DiffusionBackend& be,
                const py::array_t<float, py::array::c_style | py::array::forcecast>& z) {
                 return array_from_tensor(be.decode_latent(tensor_from_array(z)));
             })
        .def("encode_image",
             [](const DiffusionBackend& be,
                const py::array_t<float, py::array::c_style | py::array::forcecast>& img) {
                 return array_from_tensor(be.encode_image(tensor_from_array(img)));
             });
    m.def("make_backend", &make_backend, py::arg("name"));

    m.def("generate_watermarked",
          [](const std::string& prompt, int user_id, const DiffusionBackend& backend,
             WatermarkModel& model, float alpha, int kappa, int steps, std::uint64_t seed) {
              GenerateOptions opts;
              opts.fusion = FusionConfig{alpha, kappa};
              opts.steps = steps;
              opts.seed = seed;
              auto res = generate_watermarked(prompt, user_id, backend, model, opts);
              return py::make_tuple(array_from_tensor(res.image),
                                    py::module_::import("json").attr("loads")(
                                        res.manifest.to_json().dump()));
          },
          py::arg("prompt"), py::arg("user_id"), py::arg("backend"), py::arg("model"),
          py::arg("alpha") = 0.05f, py::arg("kappa") = 3, py::arg("steps") = 30,
          py::arg("seed") = 0);

    m.def("verify_image",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& img,
             WatermarkModel& model, const std::optional<MetadataRecord>& expected) {
              const auto rep = verify_image(tensor_from_array(img), model, GlyphLayout{}, expected);
              return py::module_::import("json").attr("loads")(rep.to_json().dump());
          },
          py::arg("image"), py::arg("model"), py::arg("expected") = std::nullopt);
}
