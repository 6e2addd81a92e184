#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "hardneg/cli.hpp"
#include "hardneg/config.hpp"
#include "hardneg/dataset.hpp"
#include "hardneg/errors.hpp"
#include "hardneg/losses.hpp"
#include "hardneg/sampling.hpp"
#include "hardneg/selfcheck.hpp"

namespace py = pybind11;
using namespace hardneg;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64Array& a) {
    std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

F64Array to_array(const Tensor& t) {
    F64Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

template <typename T>
std::vector<T> to_vector(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
    return std::vector<T>(a.data(), a.data() + a.size());
}

template <typename T>
py::array_t<T> from_vector(const std::vector<T>& v) {
    py::array_t<T> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::tuple loss_tuple(const LossOutput& o) {
    return py::make_tuple(o.loss, to_array(o.grad_z_s), to_array(o.grad_z_i));
}

py::dict dataset_to_dict(const CanonicalDataset& ds) {
    py::dict modalities;
    for (const auto& m : ds.modalities) {
        py::array_t<float> values({static_cast<py::ssize_t>(m.num_windows()),
                                   static_cast<py::ssize_t>(m.time),
                                   static_cast<py::ssize_t>(m.channels)});
        std::copy(m.values.begin(), m.values.end(), values.mutable_data());
        modalities[py::str(m.name)] =
            py::dict(py::arg("values") = values, py::arg("sampling_rate_hz") = m.sampling_rate_hz);
    }
    py::dict d;
    d["modalities"] = modalities;
    d["labels"] = from_vector(ds.labels);
    d["subject_ids"] = from_vector(ds.subject_ids);
    d["session_ids"] = from_vector(ds.session_ids);
    d["class_names"] = ds.class_names;
    return d;
}

CanonicalDataset dataset_from_dict(const py::dict& d) {
    CanonicalDataset ds;
    for (const auto& [key, value] : d["modalities"].cast<py::dict>()) {
        const auto entry = value.cast<py::dict>();
        const F32Array values = entry["values"].cast<F32Array>();
        if (values.ndim() != 3) throw ShapeError("modality values must be [windows, time, channels]");
        ModalityData m;
        m.name = key.cast<std::string>();
        m.time = static_cast<std::size_t>(values.shape(1));
        m.channels = static_cast<std::size_t>(values.shape(2));
        m.sampling_rate_hz =
            entry.contains("sampling_rate_hz") ? entry["sampling_rate_hz"].cast<double>() : 0.0;
        m.values = to_vector(values);
        ds.modalities.push_back(std::move(m));
    }
    ds.labels = to_vector(d["labels"].cast<IntArray>());
    ds.subject_ids = to_vector(d["subject_ids"].cast<IntArray>());
    ds.session_ids = to_vector(d["session_ids"].cast<IntArray>());
    ds.class_names = d["class_names"].cast<std::vector<std::string>>();
    ds.validate();
    return ds;
}

SynthConfig synth_from_kwargs(const py::kwargs& kwargs) {
    const Json j = Json::parse(py::module_::import("json").attr("dumps")(kwargs).cast<std::string>());
    return synth_config_from_json(j);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Contrastive losses, synthetic data and the canonical dataset format";

    static py::exception<Error> base_error(m, "Error");
    static py::exception<ConfigError> config_error(m, "ConfigError", base_error.ptr());
    static py::exception<DataError> data_error(m, "DataError", base_error.ptr());
    static py::exception<ShapeError> shape_error(m, "ShapeError", base_error.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            PyErr_SetString(config_error.ptr(), e.what());
        } catch (const DataError& e) {
            PyErr_SetString(data_error.ptr(), e.what());
        } catch (const ShapeError& e) {
            PyErr_SetString(shape_error.ptr(), e.what());
        } catch (const Error& e) {
            PyErr_SetString(base_error.ptr(), e.what());
        }
    });

    m.def(
        "info_nce",
        [](const F64Array& z_s, const F64Array& z_i, double temperature) {
            const EmbeddingBatch batch = EmbeddingBatch::make(to_tensor(z_s), to_tensor(z_i));
            return loss_tuple(info_nce_bidirectional(batch, temperature));
        },
        py::arg("z_s"), py::arg("z_i"), py::arg("temperature"),
        "Bidirectional cross-modal InfoNCE. Returns (loss, d/dz_s, d/dz_i).");
    m.def(
        "hnl",
        [](const F64Array& z_s, const F64Array& z_i, double beta, double tau_plus, double temperature) {
            const Tensor a = to_tensor(z_s);
            const HnlParams p(beta, tau_plus, temperature, a.rows() - 1);
            return loss_tuple(hnl_loss_bidirectional(EmbeddingBatch::make(a, to_tensor(z_i)), p));
        },
        py::arg("z_s"), py::arg("z_i"), py::arg("beta"), py::arg("tau_plus"), py::arg("temperature"));
    m.def(
        "debiased",
        [](const F64Array& z_s, const F64Array& z_i, double tau_plus, double temperature) {
            const EmbeddingBatch batch = EmbeddingBatch::make(to_tensor(z_s), to_tensor(z_i));
            return loss_tuple(debiased_loss_bidirectional(batch, tau_plus, temperature));
        },
        py::arg("z_s"), py::arg("z_i"), py::arg("tau_plus"), py::arg("temperature"));
    m.def(
        "nt_xent",
        [](const F64Array& z_a, const F64Array& z_b, double temperature, std::optional<double> beta,
           double tau_plus) {
            const Tensor a = to_tensor(z_a);
            std::optional<HnlParams> hnl;
            if (beta) hnl.emplace(*beta, tau_plus, temperature, 2 * a.rows() - 2);
            return loss_tuple(nt_xent_two_view(a, to_tensor(z_b), temperature, hnl));
        },
        py::arg("z_a"), py::arg("z_b"), py::arg("temperature"), py::arg("beta") = py::none(),
        py::arg("tau_plus") = 0.0, "Two-view NT-Xent; pass beta for the hard-negative variant.");
    m.def(
        "hnl_delta",
        [](double sim_pos, const std::vector<double>& sims_neg, double beta, double tau_plus,
           double temperature) {
            const HnlParams p(beta, tau_plus, temperature, sims_neg.size());
            const DeltaTerm d = hnl_delta_term(sim_pos, sims_neg, p);
            return py::make_tuple(d.value, d.clamped);
        },
        py::arg("sim_pos"), py::arg("sims_neg"), py::arg("beta"), py::arg("tau_plus"),
        py::arg("temperature"));
    m.def(
        "hardness_weights",
        [](const std::vector<double>& sims, double beta) { return hardness_weights(sims, beta).weights; },
        py::arg("sims"), py::arg("beta"));

    m.def(
        "generate_synthetic",
        [](const py::kwargs& kwargs) {
            return dataset_to_dict(generate_synthetic(synth_from_kwargs(kwargs)));
        },
        "Synthetic two-modality dataset; keyword arguments override the synth config.");
    m.def(
        "load_canonical",
        [](const std::filesystem::path& dir) { return dataset_to_dict(load_canonical(dir)); },
        py::arg("path"));
    m.def(
        "save_canonical",
        [](const py::dict& ds, const std::filesystem::path& dir) {
            save_canonical(dataset_from_dict(ds), dir);
        },
        py::arg("dataset"), py::arg("path"),
        "Validates and writes a dataset dict in the canonical directory format.");
    m.def(
        "make_split",
        [](const py::dict& ds, const std::string& protocol, std::size_t first_k, double session_fraction) {
            const SplitSpec s = make_split(dataset_from_dict(ds),
                                           {split_protocol_from_string(protocol), first_k, session_fraction});
            return py::make_tuple(s.train, s.test);
        },
        py::arg("dataset"), py::arg("protocol") = "cross_subject_odd_even", py::arg("first_k") = 16,
        py::arg("session_fraction") = 0.8);

    m.def(
        "selfcheck",
        [](std::uint64_t seed) {
            std::vector<py::tuple> out;
            for (const auto& r : run_selfcheck(seed)) {
                out.push_back(py::make_tuple(r.name, r.passed, r.detail));
            }
            return out;
        },
        py::arg("seed") = 0);
    m.def(
        "cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"hardneg"};
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line front end in process. Returns (exit code, stdout, stderr).");
}
