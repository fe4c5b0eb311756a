// Python bindings for the lesion-contrastive core: the numerical pieces most
// useful from notebooks (loss, kappa, model forward, synthetic data).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <stdexcept>

#include "lcl/contrastive.hpp"
#include "lcl/eval.hpp"
#include "lcl/model.hpp"
#include "lcl/synth.hpp"

namespace py = pybind11;
using namespace lcl;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<int>(a.shape(i));
    Tensor t(shape);
    std::memcpy(t.data.data(), a.data(), sizeof(double) * t.data.size());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> a(shape);
    std::memcpy(a.mutable_data(), t.data.data(), sizeof(double) * t.data.size());
    return a;
}

EmbeddingBatch batch_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& z,
                          double tau) {
    if (z.ndim() != 2 || z.shape(0) % 2 != 0)
        throw std::invalid_argument("z must be a [2N, d] array");
    EmbeddingBatch b;
    b.z = tensor_from_array(z);
    b.temperature = tau;
    b.partner.resize(z.shape(0));
    for (py::ssize_t k = 0; k < z.shape(0) / 2; ++k) {
        b.partner[2 * k] = static_cast<int>(2 * k + 1);
        b.partner[2 * k + 1] = static_cast<int>(2 * k);
    }
    return b;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "lesion-patch contrastive learning core";

    m.def(
        "ntxent_loss",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& z, double tau) {
            const LossReport r = ntxent_loss(batch_from(z, tau));
            return py::dict(py::arg("total") = r.total, py::arg("mean") = r.mean,
                            py::arg("accuracy") = r.accuracy);
        },
        py::arg("z"), py::arg("tau") = 0.07,
        "Contrastive loss over a [2N, d] embedding matrix; rows 2k and 2k+1 are positives.");

    m.def(
        "ntxent_grad",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& z, double tau) {
            Tensor g;
            ntxent_loss(batch_from(z, tau), &g);
            return array_from_tensor(g);
        },
        py::arg("z"), py::arg("tau") = 0.07, "Gradient of the summed loss w.r.t. z.");

    m.def(
        "cosine_sim",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& u,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& v) {
            return cosine_sim(tensor_from_array(u), tensor_from_array(v));
        },
        py::arg("u"), py::arg("v"));

    m.def(
        "quadratic_weighted_kappa",
        [](const std::vector<int>& pred, const std::vector<int>& truth, int num_classes) {
            return quadratic_weighted_kappa(pred, truth, num_classes);
        },
        py::arg("pred"), py::arg("truth"), py::arg("num_classes"));

    py::class_<ArchDescriptor>(m, "ArchDescriptor")
        .def(py::init<>())
        .def_readwrite("conv_channels", &ArchDescriptor::conv_channels)
        .def_readwrite("embed_dim", &ArchDescriptor::embed_dim)
        .def("feature_dim", &ArchDescriptor::feature_dim)
        .def("__str__", &ArchDescriptor::to_string)
        .def_static("parse", &ArchDescriptor::parse);

    m.def(
        "forward_features",
        [](const std::string& checkpoint_path,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& image) {
            const Checkpoint ck = load_checkpoint(checkpoint_path, /*drop_head=*/true);
            if (image.ndim() != 3 || image.shape(0) != 3)
                throw std::invalid_argument("image must be [3, H, W]");
            return array_from_tensor(forward_features(ck.params, ck.desc,
                                                      tensor_from_array(image)));
        },
        py::arg("checkpoint_path"), py::arg("image"),
        "Frozen-encoder features for a [3, H, W] image in [0, 1].");

    m.def(
        "synth_dataset",
        [](int count, std::uint64_t seed) {
            SynthConfig cfg;
            cfg.count = count;
            cfg.seed = seed;
            py::list out;
            for (const auto& s : generate(cfg)) {
                py::array_t<double> img({3, cfg.image_size, cfg.image_size});
                auto buf = img.mutable_unchecked<3>();
                for (int c = 0; c < 3; ++c)
                    for (int y = 0; y < cfg.image_size; ++y)
                        for (int x = 0; x < cfg.image_size; ++x)
                            buf(c, y, x) = s.image.at(y, x, c);
                out.append(py::dict(py::arg("image_id") = s.image_id, py::arg("grade") = s.grade,
                                    py::arg("image") = img,
                                    py::arg("num_lesions") = s.true_boxes.size()));
            }
            return out;
        },
        py::arg("count") = 8, py::arg("seed") = 0,
        "Synthetic graded fundus-like images as dicts with [3, S, S] arrays.");
}
