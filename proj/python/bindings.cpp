// Thin pybind11 layer. Configs and reports cross the boundary as JSON text;
// python/lyapcert/__init__.py turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "lyapcert/baselines.hpp"
#include "lyapcert/config.hpp"
#include "lyapcert/control.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/io.hpp"
#include "lyapcert/meta.hpp"
#include "lyapcert/net.hpp"

namespace py = pybind11;
using namespace lyapcert;

namespace {

using Rows = std::vector<std::vector<double>>;

Matrix to_matrix(const Rows& rows) {
    if (rows.empty() || rows[0].empty()) {
        throw DimensionMismatch("empty matrix");
    }
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != m.cols()) {
            throw DimensionMismatch("ragged matrix");
        }
        for (std::size_t j = 0; j < m.cols(); ++j) {
            m(i, j) = rows[i][j];
        }
    }
    return m;
}

Rows to_rows(const Matrix& m) {
    Rows out(m.rows(), std::vector<double>(m.cols()));
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out[i][j] = m(i, j);
        }
    }
    return out;
}

ExperimentConfig parse(const std::string& text) {
    return config_from_json(nlohmann::json::parse(text));
}

std::vector<Sample> batch_of(const Rows& xs, const Rows& ys) {
    if (xs.size() != ys.size()) {
        throw DimensionMismatch("xs and ys differ in length");
    }
    std::vector<Sample> batch(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        batch[i] = {xs[i], ys[i]};
    }
    return batch;
}

// l(theta) = (theta - a)^2, the closed-form MAML surrogate.
class ScalarQuadratic final : public net::Objective {
public:
    explicit ScalarQuadratic(double a) : a_(a) {}
    std::size_t param_count() const override { return 1; }
    double value(std::span<const double> t, std::span<const Sample>) const override {
        return (t[0] - a_) * (t[0] - a_);
    }
    std::vector<double> gradient(std::span<const double> t, std::span<const Sample>) const override {
        return {2.0 * (t[0] - a_)};
    }

private:
    double a_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Meta-learned neural Lyapunov certificates";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<RegionSelectionFailure>(m, "RegionSelectionFailure", PyExc_RuntimeError);

    m.def("preset_names", &preset_names);
    m.def("load_preset", [](const std::string& name) { return to_json(load_preset(name)).dump(); });
    m.def("normalize_config", [](const std::string& text) { return to_json(parse(text)).dump(); },
          "Parse, validate and re-serialize a config with defaults filled in.");
    m.def("config_hash", [](const std::string& text) { return config_hash(parse(text)); });

    m.def("solve_lyapunov", [](const Rows& a, const Rows& q) {
        return to_rows(control::solve_lyapunov(to_matrix(a), to_matrix(q)));
    });
    m.def("is_hurwitz", [](const Rows& a) { return control::is_hurwitz(to_matrix(a)); });
    m.def(
        "kleinman_lqr",
        [](const Rows& a, const Rows& b, const Rows& q, const Rows& r, const Rows& k0) {
            const auto res = control::kleinman_lqr(to_matrix(a), to_matrix(b), to_matrix(q), to_matrix(r),
                                                   to_matrix(k0));
            return py::make_tuple(to_rows(res.gain), to_rows(res.cost), res.iterations);
        },
        "Returns (K, P, iterations).");

    m.def("init_params", [](std::size_t input_dim, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
        return net::init_params(Architecture{input_dim, hidden}, seed);
    });
    m.def("forward", [](const std::vector<double>& theta, std::size_t input_dim,
                        const std::vector<std::size_t>& hidden, const std::vector<double>& x) {
        return net::forward(theta, Architecture{input_dim, hidden}, x);
    });
    m.def("input_gradient", [](const std::vector<double>& theta, std::size_t input_dim,
                               const std::vector<std::size_t>& hidden, const std::vector<double>& x) {
        return net::input_gradient(theta, Architecture{input_dim, hidden}, x);
    });
    m.def(
        "loss",
        [](const std::vector<double>& theta, std::size_t input_dim, const std::vector<std::size_t>& hidden,
           const Rows& xs, const Rows& ys, double eps_positive, double eps_decrease) {
            const Architecture arch{input_dim, hidden};
            const TightenedLossConfig cfg{eps_positive, eps_decrease};
            const auto batch = batch_of(xs, ys);
            return py::make_tuple(empirical_loss(theta, arch, batch, cfg), net::loss_gradient(theta, arch, batch, cfg));
        },
        "Returns (loss, gradient w.r.t. theta) of the tightened Lyapunov loss.");

    m.def(
        "maml_scalar_quadratic",
        [](double theta, double a, double alpha) {
            const ScalarQuadratic q(a);
            const std::vector<double> t{theta};
            return py::dict(py::arg("adapted") = meta::adapt_step(q, t, {}, alpha)[0],
                            py::arg("meta_loss") = meta::meta_objective(q, t, {}, {}, alpha),
                            py::arg("second_order") = meta::meta_gradient(q, t, {}, {}, alpha,
                                                                          meta::Mode::SecondOrder)[0],
                            py::arg("first_order") = meta::meta_gradient(q, t, {}, {}, alpha,
                                                                         meta::Mode::FirstOrder)[0]);
        },
        "Adaptation and meta-gradients on l(theta) = (theta - a)^2.");

    m.def(
        "qlf",
        [](const std::string& text) {
            const ExperimentConfig config = parse(text);
            py::gil_scoped_release release;
            BaselineReport r = qlf_ts(config);
            validate_roa(r, config, static_cast<std::uint64_t>(Method::QlfTs));
            return io::report_json(r).dump();
        },
        "Quadratic baseline on the config's test system, as a report JSON.");
    m.def(
        "compare",
        [](const std::string& text) {
            const ExperimentConfig config = parse(text);
            py::gil_scoped_release release;
            return io::comparison_json(compare(config), config).dump();
        },
        "Every method on the config's test system, as a comparison JSON.");
}
