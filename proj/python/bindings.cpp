#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ecg/dataset.hpp"
#include "ecg/error.hpp"
#include "ecg/evaluation.hpp"
#include "ecg/nn/checkpoint.hpp"
#include "ecg/nn/model.hpp"
#include "ecg/pipeline.hpp"
#include "ecg/preprocess.hpp"
#include "ecg/training.hpp"

namespace py = pybind11;
using namespace ecg;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor3 to_tensor(const DoubleArray& a) {
    if (a.ndim() != 3) throw Error(ErrorKind::ShapeMismatch, "expected a 3-d array (batch, time, leads)");
    const auto* p = a.data();
    return Tensor3(a.shape(0), a.shape(1), a.shape(2), std::vector<double>(p, p + a.size()));
}

DoubleArray from_tensor(const Tensor3& t) {
    DoubleArray out({t.batch(), t.time(), t.channels()});
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

void check_rows(const py::array& a, const char* what) {
    if (a.ndim() != 2 || a.shape(1) != static_cast<py::ssize_t>(kNumClasses)) {
        throw Error(ErrorKind::ShapeMismatch, std::string(what) + " must have shape (n, 5)");
    }
}

ScoreMatrix to_scores(const DoubleArray& a) {
    check_rows(a, "scores");
    ScoreMatrix m(a.shape(0));
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t c = 0; c < kNumClasses; ++c) m[i][c] = a.at(i, c);
    }
    return m;
}

LabelMatrix to_labels(const ByteArray& a) {
    check_rows(a, "labels");
    LabelMatrix m(a.shape(0));
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t c = 0; c < kNumClasses; ++c) m[i][c] = a.at(i, c) ? 1 : 0;
    }
    return m;
}

DoubleArray from_scores(const ScoreMatrix& m) {
    DoubleArray out({m.size(), kNumClasses});
    auto r = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t c = 0; c < kNumClasses; ++c) r(i, c) = m[i][c];
    }
    return out;
}

ByteArray from_labels(const LabelMatrix& m) {
    ByteArray out({m.size(), kNumClasses});
    auto r = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t c = 0; c < kNumClasses; ++c) r(i, c) = m[i][c];
    }
    return out;
}

py::dict counts_dict(const nn::ParamCounts& c) {
    py::dict d;
    d["total"] = c.total;
    d["trainable"] = c.trainable;
    d["non_trainable"] = c.non_trainable;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "ECG CNN-VAE multi-label classifier";

    static py::exception<Error> ecg_error(m, "EcgError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object err = ecg_error;
            py::object instance = err(e.what());
            instance.attr("kind") = std::string(kind_name(e.kind()));
            PyErr_SetObject(err.ptr(), instance.ptr());
        }
    });

    m.attr("CLASS_NAMES") = py::cast(std::vector<std::string>(kClassNames.begin(), kClassNames.end()));

    m.def(
        "param_counts",
        [](bool include_log_var_head) {
            auto c = nn::ModelConfig::defaults();
            c.include_log_var_head = include_log_var_head;
            return counts_dict(nn::build_model(c).counts());
        },
        py::arg("include_log_var_head") = false);

    m.def(
        "generate_synthetic",
        [](std::size_t n, std::uint64_t seed) {
            const auto corpus = dataset::generate_synthetic(n, seed, pipeline::RunConfig{}.synthetic_mix);
            py::array_t<float> signals({n, corpus.time_steps(), corpus.leads()});
            std::vector<int> folds;
            float* out = signals.mutable_data();
            for (std::size_t i = 0; i < n; ++i) {
                std::copy(corpus[i].signal.begin(), corpus[i].signal.end(), out + i * corpus[i].signal.size());
                folds.push_back(corpus[i].strat_fold);
            }
            return py::make_tuple(signals, from_labels(corpus.labels()), py::array(py::cast(folds)));
        },
        py::arg("n"), py::arg("seed") = 0, "Returns (signals float32 [n,1000,12], labels uint8 [n,5], folds int [n]).");

    m.def(
        "fit_norm_stats",
        [](const DoubleArray& x) {
            const auto s = preprocess::fit_norm_stats(to_tensor(x));
            return py::make_tuple(py::array(py::cast(s.mu)), py::array(py::cast(s.sigma)));
        },
        py::arg("signals"), "Per-lead (mu, sigma) of a (batch, time, leads) array.");

    m.def(
        "apply_norm",
        [](const DoubleArray& x, std::vector<double> mu, std::vector<double> sigma) {
            preprocess::NormStats s;
            s.mu = std::move(mu);
            s.sigma = std::move(sigma);
            return from_tensor(preprocess::apply_norm(to_tensor(x), s));
        },
        py::arg("signals"), py::arg("mu"), py::arg("sigma"));

    m.def(
        "weighted_bce",
        [](const DoubleArray& p, const ByteArray& y, std::vector<double> w) {
            const auto r = training::weighted_bce(to_scores(p), to_labels(y), w);
            return py::make_tuple(r.loss, from_scores(r.grad));
        },
        py::arg("predictions"), py::arg("targets"), py::arg("weights"), "Returns (loss, d loss / d predictions).");

    m.def(
        "evaluate",
        [](const DoubleArray& p, const ByteArray& y, double threshold) {
            return evaluation::report_to_json(evaluation::evaluate(to_scores(p), to_labels(y), threshold));
        },
        py::arg("probabilities"), py::arg("truth"), py::arg("threshold") = evaluation::kDefaultThreshold,
        "Report as a JSON string.");

    m.def(
        "report_from_counts",
        [](const std::vector<std::array<std::size_t, 4>>& rows) {
            if (rows.size() != kNumClasses) throw Error(ErrorKind::ShapeMismatch, "expected five (tn, fp, fn, tp) rows");
            evaluation::ConfusionCounts c;
            for (std::size_t k = 0; k < kNumClasses; ++k) c.classes[k] = {rows[k][0], rows[k][1], rows[k][2], rows[k][3]};
            return evaluation::report_to_json(evaluation::report_from_counts(c));
        },
        py::arg("counts"), "Report JSON from per-class (tn, fp, fn, tp) rows in class order.");

    m.def(
        "roc_auc",
        [](std::vector<double> scores, std::vector<std::uint8_t> truth) { return evaluation::roc_auc_single(scores, truth); },
        py::arg("scores"), py::arg("truth"));

    py::class_<nn::ModelState>(m, "Model")
        .def_static(
            "default",
            [](std::uint64_t seed, bool include_log_var_head) {
                auto c = nn::ModelConfig::defaults();
                c.seed = seed;
                c.include_log_var_head = include_log_var_head;
                return nn::build_model(c);
            },
            py::arg("seed") = 0, py::arg("include_log_var_head") = false)
        .def_static(
            "scaled",
            [](std::size_t f1, std::size_t f2, std::size_t f3, std::size_t latent, std::size_t d1, std::size_t d2,
               std::uint64_t seed) {
                auto c = nn::ModelConfig::scaled(f1, f2, f3, latent, d1, d2);
                c.seed = seed;
                return nn::build_model(c);
            },
            py::arg("f1"), py::arg("f2"), py::arg("f3"), py::arg("latent_dim"), py::arg("dense1"), py::arg("dense2"),
            py::arg("seed") = 0)
        .def_static("load", &nn::load_checkpoint, py::arg("path"))
        .def("save", &nn::save_checkpoint, py::arg("path"))
        .def("counts", [](const nn::ModelState& s) { return counts_dict(s.counts()); })
        .def(
            "infer", [](const nn::ModelState& s, const DoubleArray& x) { return from_scores(nn::infer(s, to_tensor(x))); },
            py::arg("signals"), "Sigmoid outputs (n, 5) in inference mode.")
        .def("block_names", [](const nn::ModelState& s) {
            std::vector<std::string> names;
            for (const auto& b : s.blocks) names.push_back(b.name);
            return names;
        });

    m.def(
        "run_all",
        [](const std::filesystem::path& out_dir, std::uint64_t seed, const std::map<std::string, std::string>& settings) {
            auto c = pipeline::RunConfig::synthetic_preset();
            for (const auto& [k, v] : settings) pipeline::apply_setting(c, k, v);
            c.seed = seed;
            c.out_dir = out_dir;
            py::gil_scoped_release release;
            pipeline::cmd_run_all(c);
        },
        py::arg("out_dir"), py::arg("seed") = 0, py::arg("settings") = std::map<std::string, std::string>{},
        "Synthetic prepare, train, evaluate and plot into out_dir. `settings` uses config-file keys.");
}
