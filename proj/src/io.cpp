#include "lyapcert/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lyapcert/errors.hpp"

namespace lyapcert::io {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::vector<std::string> param_names(const ParamVector& p) {
    switch (p.system) {
        case SystemId::InvertedPendulum:
            return {"l", "m", "g", "b"};
        case SystemId::CaltechFan:
            return {"m", "J", "r", "g", "d"};
        case SystemId::Microgrid: {
            std::vector<std::string> names;
            for (std::size_t i = 0; i < p.values.size(); ++i) {
                names.push_back("dc" + std::to_string(i + 1));
            }
            return names;
        }
    }
    return {};
}

std::string env_label(const ExperimentConfig& config) {
    switch (config.system.model.id) {
        case SystemId::InvertedPendulum:
            return "IP";
        case SystemId::Microgrid:
            return std::to_string(config.system.nominal.values.size()) + "-MG";
        case SystemId::CaltechFan:
            return "CF";
    }
    return "";
}

bool on_slice(const GridSpec& grid, std::size_t i, Plane plane) {
    const std::int32_t* k = grid.lattice.data() + i * grid.dim;
    const std::int32_t* o = grid.lattice.data() + grid.origin * grid.dim;
    for (std::size_t a = 0; a < grid.dim; ++a) {
        if (a != plane[0] && a != plane[1] && k[a] != o[a]) {
            return false;
        }
    }
    return true;
}

}  // namespace

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw MissingArtifact("cannot open " + tmp.string() + " for writing");
        }
        out << content;
        if (!out.flush()) {
            throw MissingArtifact("short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_json(const std::filesystem::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MissingArtifact("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw MissingArtifact(path.string() + " is not valid JSON: " + e.what());
    }
}

std::filesystem::path timing_path(const std::filesystem::path& artifact) {
    return artifact.parent_path() / (artifact.stem().string() + ".timing.json");
}

json provenance(const ExperimentConfig& config) {
    return {{"config_hash", config_hash(config)}, {"seed", config.seed}, {"name", config.name}};
}

json to_json(const ParamVector& params) {
    return {{"system", to_string(params.system)}, {"values", params.values}};
}

json to_json(const Checkpoint& ckpt) {
    json j = {{"kind", ckpt.kind},
              {"arch", {{"input_dim", ckpt.arch.input_dim}, {"hidden", ckpt.arch.hidden}}},
              {"theta", ckpt.theta},
              {"radius", ckpt.radius},
              {"region_selected", ckpt.region_selected},
              {"ledger", {{"samples_used", ckpt.samples_used}, {"steps_used", ckpt.steps_used}}},
              {"config_hash", ckpt.config_hash},
              {"seed", ckpt.seed}};
    if (ckpt.adapted_to) {
        j["adapted_to"] = to_json(*ckpt.adapted_to);
    }
    return j;
}

Checkpoint checkpoint_from_json(const json& j) {
    Checkpoint c;
    try {
        c.kind = j.at("kind").get<std::string>();
        c.arch.input_dim = j.at("arch").at("input_dim").get<std::size_t>();
        c.arch.hidden = j.at("arch").at("hidden").get<std::vector<std::size_t>>();
        c.theta = j.at("theta").get<std::vector<double>>();
        c.radius = j.at("radius").get<double>();
        c.region_selected = j.at("region_selected").get<bool>();
        c.samples_used = j.at("ledger").at("samples_used").get<std::size_t>();
        c.steps_used = j.at("ledger").at("steps_used").get<std::size_t>();
        c.config_hash = j.at("config_hash").get<std::string>();
        c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("adapted_to")) {
            ParamVector p;
            p.system = system_from_string(j["adapted_to"].at("system").get<std::string>());
            p.values = j["adapted_to"].at("values").get<std::vector<double>>();
            c.adapted_to = p;
        }
    } catch (const json::exception& e) {
        throw MissingArtifact(std::string("malformed checkpoint: ") + e.what());
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) { write_json(path, to_json(ckpt)); }

Checkpoint load_checkpoint(const std::filesystem::path& path, const Architecture& expected) {
    Checkpoint c = checkpoint_from_json(read_json(path));
    if (c.theta.size() != c.arch.param_count()) {
        throw ArchMismatch("checkpoint theta has " + std::to_string(c.theta.size()) + " entries, its architecture needs " +
                           std::to_string(c.arch.param_count()));
    }
    if (!(c.arch == expected)) {
        throw ArchMismatch("checkpoint architecture differs from the configured network");
    }
    return c;
}

json meta_run_json(const MetaRun& run) {
    json rounds = json::array();
    for (const RoundLog& r : run.log) {
        rounds.push_back({{"radius", r.radius},
                          {"green_tasks", r.green_tasks},
                          {"worst_green_fraction", r.worst_green_fraction},
                          {"final_meta_loss", r.final_meta_loss}});
    }
    json tasks = json::array();
    for (const ParamVector& p : run.tasks.params) {
        tasks.push_back(p.values);
    }
    return {{"region_selected", run.selected},
            {"radius", run.radius},
            {"rounds", run.rounds},
            {"round_log", rounds},
            {"mode", meta::to_string(run.report.mode)},
            {"tasks", tasks},
            {"final_loss", run.report.loss_curve.empty() ? 0.0 : run.report.loss_curve.back()}};
}

std::string loss_curve_csv(const std::vector<double>& curve) {
    std::string out = "step,loss\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out += std::to_string(i) + "," + fmt(curve[i]) + "\n";
    }
    return out;
}

json certification_json(const Certification& cert) {
    const GridSpec& g = cert.grid;
    const ValidityMap& m = cert.map;
    std::size_t core = 0;
    std::size_t red_outside_core = 0;
    for (const NodeRecord& r : m.nodes) {
        core += r.core ? 1 : 0;
        red_outside_core += (!r.core && !r.green()) ? 1 : 0;
    }
    json roa = {{"c", cert.roa.c},
                {"blocking_level", cert.roa.blocking_level},
                {"resolution", cert.roa.resolution},
                {"members", cert.roa.members.size()},
                {"area", cert.roa.area}};
    if (cert.roa.plane) {
        roa["plane"] = *cert.roa.plane;
    }
    json positivity = {{"certified", cert.positivity.certified}};
    if (cert.positivity.witness) {
        positivity["witness"] = *cert.positivity.witness;
    }
    return {{"grid",
             {{"radius", g.radius},
              {"dim", g.dim},
              {"nodes_per_axis", g.nodes_per_axis},
              {"spacing", g.spacing},
              {"tau", g.tau},
              {"nodes", g.node_count()}}},
            {"lipschitz",
             {{"mode", to_string(cert.constants.mode)},
              {"k_v", cert.constants.k_v},
              {"k_grad_v", cert.constants.k_grad_v},
              {"k_f", cert.constants.k_f},
              {"k_vdot", cert.constants.k_vdot}}},
            {"validity",
             {{"eps_positive", m.eps_positive},
              {"eps_decrease", m.eps_decrease},
              {"core_radius", m.core_radius},
              {"green", m.green_count()},
              {"core", core},
              {"red_outside_core", red_outside_core},
              {"fully_green", m.fully_green()}}},
            {"positivity", positivity},
            {"roa", roa}};
}

json monte_carlo_json(const MonteCarloReport& report) {
    json ce = json::array();
    for (const Counterexample& c : report.counterexamples) {
        ce.push_back({{"start", c.start}, {"final_norm", c.final_norm}, {"diverged", c.diverged}});
    }
    return {{"fraction", report.fraction},
            {"vacuous", report.vacuous},
            {"samples", report.samples},
            {"converged", report.converged},
            {"counterexamples", ce}};
}

json report_json(const BaselineReport& r) {
    json j = {{"method", to_string(r.method)},
              {"radius", r.radius},
              {"region_selected", r.region_selected},
              {"rounds", r.rounds},
              {"train_samples_used", r.train_samples_used},
              {"gradient_steps_used", r.gradient_steps_used},
              {"test_samples_used", r.test_samples_used},
              {"test_steps_used", r.test_steps_used},
              {"reads_nominal", r.reads_nominal},
              {"area", r.area()},
              {"sound", r.sound()}};
    if (r.failure) {
        j["failure"] = *r.failure;
        return j;
    }
    j["certification"] = certification_json(r.cert);
    if (r.validation) {
        j["validation"] = monte_carlo_json(*r.validation);
    }
    return j;
}

std::string stochastic_label(const ExperimentConfig& config) {
    const std::vector<std::string> names = param_names(config.system.nominal);
    std::string out = "(";
    bool first = true;
    for (std::size_t i = 0; i < names.size() && i < config.system.variance.size(); ++i) {
        if (config.system.variance[i] > 0.0) {
            out += (first ? "" : ", ") + names[i];
            first = false;
        }
    }
    return out + ")";
}

json comparison_json(const ComparisonTable& table, const ExperimentConfig& config) {
    json rows = json::array();
    for (const BaselineReport& r : table.rows) {
        rows.push_back(report_json(r));
    }
    return {{"provenance", provenance(config)},
            {"env", env_label(config)},
            {"stochastic_params", stochastic_label(config)},
            {"system", table.system},
            {"preset", table.preset},
            {"nominal", to_json(table.nominal)},
            {"test", to_json(table.test)},
            {"verification_hash", table.verification_hash},
            {"sos_lf_ts", "not implemented"},
            {"rows", rows}};
}

std::string comparison_csv(const ComparisonTable& table, const ExperimentConfig& config) {
    auto area_of = [&](Method m) -> std::string {
        for (const BaselineReport& r : table.rows) {
            if (r.method == m) {
                return r.failure ? std::string("failed") : fmt(r.area());
            }
        }
        return "";
    };
    std::string out = "# config_hash=" + config_hash(config) + " seed=" + std::to_string(config.seed) + "\n";
    out += "env,stochastic_params,NLF_TS,QLF_TS,SOS_LF_TS,T_NLF,META_NLF\n";
    out += env_label(config) + ",\"" + stochastic_label(config) + "\"," + area_of(Method::NlfTs) + "," +
           area_of(Method::QlfTs) + ",not implemented," + area_of(Method::TNlf) + "," + area_of(Method::MetaNlf) +
           "\n";
    return out;
}

std::string validity_csv(const Certification& cert, Plane plane) {
    const GridSpec& g = cert.grid;
    if (plane[0] == plane[1] || plane[0] >= g.dim || plane[1] >= g.dim) {
        throw BadAxes("validity slice needs two distinct axes below " + std::to_string(g.dim));
    }
    std::string out = "x" + std::to_string(plane[0]) + ",x" + std::to_string(plane[1]) +
                      ",vbar,lie,positivity_ok,decrease_ok,core,boundary,member\n";
    char buf[256];
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (!on_slice(g, i, plane)) {
            continue;
        }
        const NodeRecord& r = cert.map.nodes[i];
        const bool member = std::binary_search(cert.roa.members.begin(), cert.roa.members.end(), i);
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%d,%d,%d,%d,%d\n", g.node(i)[plane[0]],
                      g.node(i)[plane[1]], r.vbar, r.lie, r.positivity_ok ? 1 : 0, r.decrease_ok ? 1 : 0,
                      r.core ? 1 : 0, g.boundary[i] ? 1 : 0, member ? 1 : 0);
        out += buf;
    }
    return out;
}

std::string trajectories_csv(const std::vector<Trajectory>& runs) {
    std::string out;
    if (runs.empty() || runs.front().states.empty()) {
        return "run,t\n";
    }
    out = "run,t";
    for (std::size_t a = 0; a < runs.front().states.front().size(); ++a) {
        out += ",x" + std::to_string(a);
    }
    out += "\n";
    for (std::size_t r = 0; r < runs.size(); ++r) {
        for (std::size_t k = 0; k < runs[r].states.size(); ++k) {
            out += std::to_string(r) + "," + fmt(runs[r].times[k]);
            for (double v : runs[r].states[k]) {
                out += "," + fmt(v);
            }
            out += "\n";
        }
    }
    return out;
}

std::string render_svg(const std::vector<SvgLayer>& layers, const SvgOptions& options) {
    if (layers.empty() || layers.front().cert == nullptr) {
        throw MissingArtifact("render_svg needs at least one certified layer");
    }
    const GridSpec& base = layers.front().cert->grid;
    const Plane plane = options.plane;
    if (plane[0] == plane[1] || plane[0] >= base.dim || plane[1] >= base.dim) {
        throw BadAxes("plot plane needs two distinct axes below " + std::to_string(base.dim));
    }
    double extent = 0.0;
    for (const SvgLayer& l : layers) {
        extent = std::max(extent, l.cert->grid.radius);
    }
    const double size = options.size_px;
    const double margin = 40.0;
    const double scale = (size - 2.0 * margin) / (2.0 * extent);
    auto px = [&](double x) { return margin + (x + extent) * scale; };
    auto py = [&](double y) { return size - margin - (y + extent) * scale; };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_px(size) << "\" height=\"" << fmt_px(size)
      << "\" viewBox=\"0 0 " << fmt_px(size) << ' ' << fmt_px(size) << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    if (options.heatmap) {
        // Downsample to at most 160 bins per axis; a bin shows its worst node.
        const Certification& cert = *layers.front().cert;
        const std::size_t n = base.nodes_per_axis;
        const std::size_t bins = std::min<std::size_t>(n, 160);
        std::vector<int> state(bins * bins, -1);  // 0 green, 1 red core, 2 red
        for (std::size_t i = 0; i < base.node_count(); ++i) {
            if (!on_slice(base, i, plane)) {
                continue;
            }
            const std::int32_t* k = base.lattice.data() + i * base.dim;
            const std::size_t bx = static_cast<std::size_t>(k[plane[0]]) * bins / n;
            const std::size_t by = static_cast<std::size_t>(k[plane[1]]) * bins / n;
            const NodeRecord& r = cert.map.nodes[i];
            const int v = r.green() ? 0 : (r.core ? 1 : 2);
            int& cell = state[by * bins + bx];
            cell = std::max(cell, v);
        }
        const double bin_w = 2.0 * base.radius / static_cast<double>(bins);
        static const char* colors[] = {"#b9e4b0", "#f3d48b", "#f2a6a0"};
        for (std::size_t by = 0; by < bins; ++by) {
            for (std::size_t bx = 0; bx < bins; ++bx) {
                const int v = state[by * bins + bx];
                if (v < 0) {
                    continue;
                }
                const double x0 = -base.radius + bx * bin_w;
                const double y1 = -base.radius + (by + 1) * bin_w;
                s << "<rect x=\"" << fmt_px(px(x0)) << "\" y=\"" << fmt_px(py(y1)) << "\" width=\""
                  << fmt_px(bin_w * scale + 0.3) << "\" height=\"" << fmt_px(bin_w * scale + 0.3) << "\" fill=\""
                  << colors[v] << "\"/>\n";
            }
        }
    }

    if (options.field != nullptr && base.dim == 2) {
        const int glyphs = 17;
        const double step = 2.0 * base.radius / (glyphs - 1);
        const double len = 0.4 * step;
        for (int a = 0; a < glyphs; ++a) {
            for (int b = 0; b < glyphs; ++b) {
                const std::vector<double> x = {-base.radius + a * step, -base.radius + b * step};
                if (std::hypot(x[0], x[1]) > base.radius) {
                    continue;
                }
                const std::vector<double> f = (*options.field)(x);
                const double norm = std::hypot(f[0], f[1]);
                if (!(norm > 0.0) || !std::isfinite(norm)) {
                    continue;
                }
                const double ex = x[0] + len * f[0] / norm;
                const double ey = x[1] + len * f[1] / norm;
                s << "<line x1=\"" << fmt_px(px(x[0])) << "\" y1=\"" << fmt_px(py(x[1])) << "\" x2=\"" << fmt_px(px(ex))
                  << "\" y2=\"" << fmt_px(py(ey)) << "\" stroke=\"#777\" stroke-width=\"1\"/>\n";
                s << "<circle cx=\"" << fmt_px(px(ex)) << "\" cy=\"" << fmt_px(py(ey))
                  << "\" r=\"1.5\" fill=\"#777\"/>\n";
            }
        }
    }

    // ROA outline: edges of the projected member cells that face a non-member.
    for (const SvgLayer& layer : layers) {
        const Certification& cert = *layer.cert;
        if (cert.roa.empty()) {
            continue;
        }
        const auto shadow_list = project_plane(cert.roa, cert.grid, plane);
        const std::set<std::pair<std::int32_t, std::int32_t>> shadow(shadow_list.begin(), shadow_list.end());
        const double h = cert.grid.spacing;
        const double r = cert.grid.radius;
        std::ostringstream path;
        for (const auto& [i, j] : shadow) {
            const double cx = -r + i * h;
            const double cy = -r + j * h;
            const double l = cx - h / 2, rr = cx + h / 2, b = cy - h / 2, t = cy + h / 2;
            if (!shadow.count({i - 1, j})) {
                path << "M" << fmt_px(px(l)) << ' ' << fmt_px(py(b)) << "L" << fmt_px(px(l)) << ' ' << fmt_px(py(t));
            }
            if (!shadow.count({i + 1, j})) {
                path << "M" << fmt_px(px(rr)) << ' ' << fmt_px(py(b)) << "L" << fmt_px(px(rr)) << ' ' << fmt_px(py(t));
            }
            if (!shadow.count({i, j - 1})) {
                path << "M" << fmt_px(px(l)) << ' ' << fmt_px(py(b)) << "L" << fmt_px(px(rr)) << ' ' << fmt_px(py(b));
            }
            if (!shadow.count({i, j + 1})) {
                path << "M" << fmt_px(px(l)) << ' ' << fmt_px(py(t)) << "L" << fmt_px(px(rr)) << ' ' << fmt_px(py(t));
            }
        }
        s << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << layer.color
          << "\" stroke-width=\"1.6\"/>\n";
    }

    for (const Trajectory& traj : options.trajectories) {
        s << "<polyline fill=\"none\" stroke=\"#333\" stroke-width=\"0.8\" points=\"";
        for (const auto& x : traj.states) {
            s << fmt_px(px(x[plane[0]])) << ',' << fmt_px(py(x[plane[1]])) << ' ';
        }
        s << "\"/>\n";
    }

    // Frame, axes labels and legend.
    s << "<circle cx=\"" << fmt_px(px(0)) << "\" cy=\"" << fmt_px(py(0)) << "\" r=\"" << fmt_px(base.radius * scale)
      << "\" fill=\"none\" stroke=\"#444\" stroke-dasharray=\"4 3\"/>\n";
    s << "<text x=\"" << fmt_px(size / 2) << "\" y=\"" << fmt_px(size - 10) << "\" font-family=\"sans-serif\" "
      << "font-size=\"12\" text-anchor=\"middle\">x" << plane[0] << "</text>\n";
    s << "<text x=\"12\" y=\"" << fmt_px(size / 2) << "\" font-family=\"sans-serif\" font-size=\"12\">x" << plane[1]
      << "</text>\n";
    double ly = 16.0;
    for (const SvgLayer& layer : layers) {
        s << "<text x=\"" << fmt_px(margin) << "\" y=\"" << fmt_px(ly) << "\" font-family=\"sans-serif\" "
          << "font-size=\"12\" fill=\"" << layer.color << "\">" << layer.label << " area "
          << fmt_px(layer.cert->roa.area) << "</text>\n";
        ly += 14.0;
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace lyapcert::io
