#include "lyapcert/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "lyapcert/errors.hpp"
#include "lyapcert/parallel.hpp"

#ifndef LYAPCERT_SOURCE_PRESET_DIR
#define LYAPCERT_SOURCE_PRESET_DIR "presets"
#endif

namespace lyapcert {

using nlohmann::json;

namespace {

std::string join_path(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

// Reads one JSON object, remembering which keys were consumed so leftovers can
// be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError((path_.empty() ? std::string("config") : path_) + " must be an object");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    std::string path(const std::string& key) const { return join_path(path_, key); }

    template <class T>
    void read(const std::string& key, T& out) {
        if (!j_.contains(key)) {
            return;
        }
        used_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path(key) + ": wrong type (got " + j_.at(key).dump() + ")");
        }
    }

    template <class T>
    void read_optional(const std::string& key, std::optional<T>& out) {
        if (!j_.contains(key)) {
            return;
        }
        T value{};
        read(key, value);
        out = value;
    }

    template <class T>
    T require(const std::string& key) {
        if (!j_.contains(key)) {
            throw ConfigError(path(key) + ": missing required field");
        }
        T value{};
        read(key, value);
        return value;
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!used_.contains(item.key())) {
                throw ConfigError(path(item.key()) + ": unknown key");
            }
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

Matrix matrix_from_json(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) {
        throw ConfigError(path + ": expected a non-empty array of rows");
    }
    std::vector<std::vector<double>> rows;
    try {
        rows = j.get<std::vector<std::vector<double>>>();
    } catch (const json::exception&) {
        throw ConfigError(path + ": expected an array of numeric rows");
    }
    for (const auto& r : rows) {
        if (r.size() != rows.front().size() || r.empty()) {
            throw ConfigError(path + ": ragged matrix");
        }
    }
    std::vector<double> flat;
    for (const auto& r : rows) {
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Matrix::from_rows(rows.size(), rows.front().size(), flat);
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t k = 0; k < m.cols(); ++k) {
            row.push_back(m(i, k));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string controller_kind_name(ControllerSpec::Kind kind) {
    switch (kind) {
        case ControllerSpec::Kind::Lqr:
            return "lqr";
        case ControllerSpec::Kind::Open:
            return "open";
        case ControllerSpec::Kind::FixedGain:
            return "fixed_gain";
    }
    return "lqr";
}

ControllerSpec controller_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    ControllerSpec spec;
    std::string kind = "lqr";
    r.read("kind", kind);
    if (kind == "lqr") {
        spec.kind = ControllerSpec::Kind::Lqr;
    } else if (kind == "open") {
        spec.kind = ControllerSpec::Kind::Open;
    } else if (kind == "fixed_gain") {
        spec.kind = ControllerSpec::Kind::FixedGain;
    } else {
        throw ConfigError(r.path("kind") + ": expected lqr, open or fixed_gain, got '" + kind + "'");
    }
    for (auto [key, slot] : {std::pair{"state_cost", &spec.state_cost}, std::pair{"input_cost", &spec.input_cost},
                             std::pair{"initial_gain", &spec.initial_gain}, std::pair{"fixed_gain", &spec.fixed_gain}}) {
        if (r.has(key)) {
            *slot = matrix_from_json(r.raw(key), r.path(key));
        }
    }
    if (spec.kind == ControllerSpec::Kind::FixedGain && !spec.fixed_gain) {
        throw ConfigError(r.path("fixed_gain") + ": required when kind is fixed_gain");
    }
    r.finish();
    return spec;
}

json controller_to_json(const ControllerSpec& spec) {
    json j{{"kind", controller_kind_name(spec.kind)}};
    if (spec.state_cost) j["state_cost"] = matrix_to_json(*spec.state_cost);
    if (spec.input_cost) j["input_cost"] = matrix_to_json(*spec.input_cost);
    if (spec.initial_gain) j["initial_gain"] = matrix_to_json(*spec.initial_gain);
    if (spec.fixed_gain) j["fixed_gain"] = matrix_to_json(*spec.fixed_gain);
    return j;
}

MicrogridNetwork network_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    MicrogridNetwork net;
    net.inertia = r.require<std::vector<double>>("inertia");
    net.voltage = r.require<std::vector<double>>("voltage");
    net.feedback = r.require<std::vector<double>>("feedback");
    net.conductance = r.require<std::vector<double>>("conductance");
    net.admittance = matrix_from_json(r.raw("admittance"), r.path("admittance"));
    net.angle = matrix_from_json(r.raw("angle"), r.path("angle"));
    r.finish();
    const std::size_t n = net.inertia.size();
    if (net.voltage.size() != n || net.feedback.size() != n || net.conductance.size() != n ||
        net.admittance.rows() != n || net.admittance.cols() != n || net.angle.rows() != n || net.angle.cols() != n) {
        throw ConfigError(path + ": all network blocks must describe the same number of buses");
    }
    return net;
}

json network_to_json(const MicrogridNetwork& net) {
    return json{{"inertia", net.inertia},
                {"voltage", net.voltage},
                {"feedback", net.feedback},
                {"conductance", net.conductance},
                {"admittance", matrix_to_json(net.admittance)},
                {"angle", matrix_to_json(net.angle)}};
}

void check(bool ok, const std::string& field, const std::string& message) {
    if (!ok) {
        throw ConfigError(field + ": " + message);
    }
}

}  // namespace

TightenedLossConfig LossBlock::at_radius(double d) const {
    TightenedLossConfig cfg;
    cfg.eps_positive = eps_positive.value_or(eps_scale * d);
    cfg.eps_decrease = eps_decrease.value_or(eps_scale * d);
    return cfg;
}

void ExperimentConfig::validate() const {
    const auto& s = system;
    check(s.model.id == s.nominal.system && s.model.id == s.test.system, "system", "parameter tuples belong to another system");
    try {
        lyapcert::validate(s.nominal);
    } catch (const Error& e) {
        throw ConfigError(std::string("system.nominal: ") + e.what());
    }
    try {
        lyapcert::validate(s.test);
    } catch (const Error& e) {
        throw ConfigError(std::string("system.test: ") + e.what());
    }
    check(s.test.values.size() == s.nominal.values.size(), "system.test", "length differs from system.nominal");
    check(s.variance.size() == s.nominal.values.size(), "system.variance", "length differs from system.nominal");
    for (double v : s.variance) {
        check(v >= 0.0 && std::isfinite(v), "system.variance", "entries must be finite and >= 0");
    }
    if (s.model.network) {
        check(s.model.id == SystemId::Microgrid, "system.network", "only valid for the microgrid");
        check(s.model.network->size() == s.nominal.values.size(), "system.network", "bus count differs from the droop tuple");
    }
    check(!arch.hidden.empty(), "nlf.hidden", "needs at least one hidden layer");
    for (std::size_t w : arch.hidden) {
        check(w > 0, "nlf.hidden", "widths must be >= 1");
    }
    check(arch.input_dim == state_dim(s.nominal), "nlf", "input dimension must equal the state dimension");

    check(data.tasks >= 1, "data.tasks", "must be >= 1");
    check(data.batches_per_task >= 1, "data.batches_per_task", "must be >= 1");
    check(data.train_size >= 1, "data.train_size", "must be >= 1");
    check(data.test_size >= 1, "data.test_size", "must be >= 1");
    check(data.adapt_samples >= 1, "data.adapt_samples", "must be >= 1");

    check(loss.eps_scale > 0.0, "loss.eps_scale", "must be > 0");
    check(!loss.eps_positive || *loss.eps_positive > 0.0, "loss.eps_positive", "must be > 0");
    check(!loss.eps_decrease || *loss.eps_decrease > 0.0, "loss.eps_decrease", "must be > 0");

    check(meta.inner_step >= 0.0, "meta.inner_step", "must be >= 0");
    check(meta.meta_step > 0.0, "meta.meta_step", "must be > 0");
    check(meta.tasks_per_step >= 1, "meta.tasks_per_step", "must be >= 1");
    check(meta.meta_steps >= 1, "meta.meta_steps", "must be >= 1");

    check(baselines.nlf_samples >= 1, "baselines.nlf_samples", "must be >= 1");
    check(baselines.nlf_batch >= 1, "baselines.nlf_batch", "must be >= 1");
    check(baselines.nlf_step_size > 0.0, "baselines.nlf_step_size", "must be > 0");
    check(baselines.tnlf_samples >= 1, "baselines.tnlf_samples", "must be >= 1");

    check(verify.d0 > 0.0 && std::isfinite(verify.d0), "verify.d0", "must be positive");
    check(verify.nodes_per_axis >= 3 && verify.nodes_per_axis % 2 == 1, "verify.nodes_per_axis", "must be odd and >= 3");
    check(verify.shrink_factor > 0.0 && verify.shrink_factor < 1.0, "verify.shrink_factor", "must lie in (0, 1)");
    check(verify.max_rounds >= 1, "verify.max_rounds", "must be >= 1");
    check(verify.lipschitz.safety >= 1.0, "verify.safety", "must be >= 1");
    check(verify.core_fraction >= 0.0 && verify.core_fraction < 1.0, "verify.core_fraction", "must lie in [0, 1)");

    check(roa.samples >= 1, "roa.samples", "must be >= 1");
    check(roa.step > 0.0, "roa.step", "must be > 0");
    check(roa.horizon > 0.0, "roa.horizon", "must be > 0");
    check(roa.tolerance > 0.0, "roa.tolerance", "must be > 0");
    if (roa.plane) {
        const std::size_t n = state_dim(s.nominal);
        check((*roa.plane)[0] != (*roa.plane)[1] && (*roa.plane)[0] < n && (*roa.plane)[1] < n, "roa.plane",
              "must name two distinct state axes");
    }
}

std::uint64_t stream_seed(const ExperimentConfig& config, SeedStream stream, std::uint64_t sub) {
    return derive_seed(derive_seed(config.seed, static_cast<std::uint64_t>(stream)), sub);
}

ExperimentConfig config_from_json(const json& j) {
    ObjectReader root(j, "");
    ExperimentConfig c;
    root.read("name", c.name);
    root.read("seed", c.seed);
    root.read("output_dir", c.output_dir);

    if (!root.has("system")) {
        throw ConfigError("system: missing required block");
    }
    {
        ObjectReader r(root.raw("system"), "system");
        const std::string id = r.require<std::string>("id");
        try {
            c.system.model.id = system_from_string(id);
        } catch (const Error&) {
            throw ConfigError("system.id: unknown system '" + id + "'");
        }
        c.system.nominal = {c.system.model.id, r.require<std::vector<double>>("nominal")};
        c.system.test = {c.system.model.id, r.require<std::vector<double>>("test")};
        c.system.variance = r.require<std::vector<double>>("variance");
        if (r.has("controller")) {
            c.system.model.controller = controller_from_json(r.raw("controller"), "system.controller");
        }
        if (r.has("network")) {
            c.system.model.network = network_from_json(r.raw("network"), "system.network");
        }
        r.finish();
    }
    c.arch.input_dim = state_dim(c.system.nominal);

    if (root.has("nlf")) {
        ObjectReader r(root.raw("nlf"), "nlf");
        r.read("hidden", c.arch.hidden);
        r.finish();
    }
    if (root.has("data")) {
        ObjectReader r(root.raw("data"), "data");
        r.read("tasks", c.data.tasks);
        r.read("batches_per_task", c.data.batches_per_task);
        r.read("train_size", c.data.train_size);
        r.read("test_size", c.data.test_size);
        r.read("adapt_samples", c.data.adapt_samples);
        r.finish();
    }
    if (root.has("loss")) {
        ObjectReader r(root.raw("loss"), "loss");
        r.read("eps_scale", c.loss.eps_scale);
        r.read_optional("eps_positive", c.loss.eps_positive);
        r.read_optional("eps_decrease", c.loss.eps_decrease);
        r.finish();
    }
    if (root.has("meta")) {
        ObjectReader r(root.raw("meta"), "meta");
        r.read("inner_step", c.meta.inner_step);
        r.read("meta_step", c.meta.meta_step);
        r.read("tasks_per_step", c.meta.tasks_per_step);
        r.read("meta_steps", c.meta.meta_steps);
        r.read("test_steps", c.meta.test_steps);
        if (r.has("mode")) {
            const std::string mode = r.require<std::string>("mode");
            try {
                c.meta.mode = meta::mode_from_string(mode);
            } catch (const Error&) {
                throw ConfigError("meta.mode: expected first_order or second_order, got '" + mode + "'");
            }
        }
        r.finish();
    }
    if (root.has("baselines")) {
        ObjectReader r(root.raw("baselines"), "baselines");
        r.read("nlf_samples", c.baselines.nlf_samples);
        r.read("nlf_steps", c.baselines.nlf_steps);
        r.read("nlf_batch", c.baselines.nlf_batch);
        r.read("nlf_step_size", c.baselines.nlf_step_size);
        r.read("tnlf_samples", c.baselines.tnlf_samples);
        r.read("tnlf_steps", c.baselines.tnlf_steps);
        r.finish();
    }
    if (root.has("verify")) {
        ObjectReader r(root.raw("verify"), "verify");
        r.read("d0", c.verify.d0);
        r.read("nodes_per_axis", c.verify.nodes_per_axis);
        r.read("shrink_factor", c.verify.shrink_factor);
        r.read("max_rounds", c.verify.max_rounds);
        r.read("safety", c.verify.lipschitz.safety);
        r.read("core_fraction", c.verify.core_fraction);
        if (r.has("lipschitz")) {
            const std::string mode = r.require<std::string>("lipschitz");
            try {
                c.verify.lipschitz.mode = lipschitz_mode_from_string(mode);
            } catch (const Error&) {
                throw ConfigError("verify.lipschitz: expected empirical or analytic, got '" + mode + "'");
            }
        }
        r.finish();
    }
    if (root.has("roa")) {
        ObjectReader r(root.raw("roa"), "roa");
        r.read("samples", c.roa.samples);
        r.read("step", c.roa.step);
        r.read("horizon", c.roa.horizon);
        r.read("tolerance", c.roa.tolerance);
        if (r.has("plane")) {
            const auto axes = r.require<std::vector<std::size_t>>("plane");
            if (axes.size() != 2) {
                throw ConfigError("roa.plane: expected two axis indices");
            }
            c.roa.plane = Plane{axes[0], axes[1]};
        }
        r.finish();
    }
    root.finish();
    c.meta.seed = stream_seed(c, SeedStream::MetaOrder);
    c.validate();
    return c;
}

json to_json(const ExperimentConfig& c) {
    json system{{"id", to_string(c.system.model.id)},
                {"nominal", c.system.nominal.values},
                {"variance", c.system.variance},
                {"test", c.system.test.values},
                {"controller", controller_to_json(c.system.model.controller)}};
    if (c.system.model.network) {
        system["network"] = network_to_json(*c.system.model.network);
    }
    json loss{{"eps_scale", c.loss.eps_scale}};
    if (c.loss.eps_positive) loss["eps_positive"] = *c.loss.eps_positive;
    if (c.loss.eps_decrease) loss["eps_decrease"] = *c.loss.eps_decrease;
    json roa{{"samples", c.roa.samples}, {"step", c.roa.step}, {"horizon", c.roa.horizon}, {"tolerance", c.roa.tolerance}};
    if (c.roa.plane) {
        roa["plane"] = {(*c.roa.plane)[0], (*c.roa.plane)[1]};
    }
    return json{
        {"name", c.name},
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"system", system},
        {"nlf", {{"hidden", c.arch.hidden}}},
        {"data",
         {{"tasks", c.data.tasks},
          {"batches_per_task", c.data.batches_per_task},
          {"train_size", c.data.train_size},
          {"test_size", c.data.test_size},
          {"adapt_samples", c.data.adapt_samples}}},
        {"loss", loss},
        {"meta",
         {{"inner_step", c.meta.inner_step},
          {"meta_step", c.meta.meta_step},
          {"tasks_per_step", c.meta.tasks_per_step},
          {"meta_steps", c.meta.meta_steps},
          {"test_steps", c.meta.test_steps},
          {"mode", meta::to_string(c.meta.mode)}}},
        {"baselines",
         {{"nlf_samples", c.baselines.nlf_samples},
          {"nlf_steps", c.baselines.nlf_steps},
          {"nlf_batch", c.baselines.nlf_batch},
          {"nlf_step_size", c.baselines.nlf_step_size},
          {"tnlf_samples", c.baselines.tnlf_samples},
          {"tnlf_steps", c.baselines.tnlf_steps}}},
        {"verify",
         {{"d0", c.verify.d0},
          {"nodes_per_axis", c.verify.nodes_per_axis},
          {"shrink_factor", c.verify.shrink_factor},
          {"max_rounds", c.verify.max_rounds},
          {"lipschitz", to_string(c.verify.lipschitz.mode)},
          {"safety", c.verify.lipschitz.safety},
          {"core_fraction", c.verify.core_fraction}}},
        {"roa", roa},
    };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw MissingArtifact("cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::filesystem::path preset_dir() {
    if (const char* env = std::getenv("LYAPCERT_PRESET_DIR")) {
        return env;
    }
    return LYAPCERT_SOURCE_PRESET_DIR;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    const auto dir = preset_dir();
    if (!std::filesystem::is_directory(dir)) {
        return names;
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") {
            names.push_back(entry.path().stem().string());
        }
    }
    std::sort(names.begin(), names.end());
    return names;
}

ExperimentConfig load_preset(const std::string& name) {
    const auto path = preset_dir() / (name + ".json");
    if (!std::filesystem::exists(path)) {
        throw ConfigError("preset: unknown preset '" + name + "' (looked in " + preset_dir().string() + ")");
    }
    return load_config(path);
}

std::string hash_json(const json& j) {
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const ExperimentConfig& config) {
    json j = to_json(config);
    j.erase("output_dir");
    return hash_json(j);
}

std::string verification_hash(const ExperimentConfig& config) {
    const json j = to_json(config);
    return hash_json(json{{"verify", j["verify"]}, {"roa", j["roa"]}});
}

}  // namespace lyapcert
