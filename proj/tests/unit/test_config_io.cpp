#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "lyapcert/config.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/io.hpp"

using namespace lyapcert;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lyapcert_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("every shipped preset loads and validates", "[config]") {
    const auto names = preset_names();
    CHECK(names.size() == 9);
    for (const auto& name : names) {
        INFO(name);
        const ExperimentConfig c = load_preset(name);
        CHECK(c.name == name);
        CHECK_NOTHROW(c.validate());
        CHECK(c.system.nominal.values.size() == c.system.variance.size());
        CHECK(c.system.test.values.size() == c.system.nominal.values.size());
        CHECK(c.arch.input_dim == state_dim(c.system.nominal));
        CHECK(c.baselines.tnlf_samples <= 50);
        CHECK(c.baselines.tnlf_steps <= 10);
        CHECK(c.data.adapt_samples <= 50);
        CHECK(c.meta.test_steps <= 10);
    }
    CHECK_THROWS_AS(load_preset("no_such_preset"), ConfigError);
}

TEST_CASE("JSON round trip preserves the config hash", "[config]") {
    for (const auto& name : preset_names()) {
        const ExperimentConfig c = load_preset(name);
        const ExperimentConfig back = config_from_json(to_json(c));
        CHECK(config_hash(back) == config_hash(c));
        CHECK(to_json(back) == to_json(c));
    }
}

TEST_CASE("config errors name the offending field", "[config]") {
    nlohmann::json j = to_json(load_preset("ip_stochastic_l"));
    SECTION("unknown key") {
        j["verify"]["d00"] = 1.0;
        try {
            config_from_json(j);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("verify.d00") != std::string::npos);
        }
    }
    SECTION("wrong type") {
        j["meta"]["meta_steps"] = "many";
        try {
            config_from_json(j);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("meta.meta_steps") != std::string::npos);
        }
    }
    SECTION("variance length") {
        j["system"]["variance"] = {0.1};
        CHECK_THROWS_AS(config_from_json(j), InputError);
    }
}

TEST_CASE("output directory does not enter the hash", "[config]") {
    ExperimentConfig a = load_preset("mg3_dc12");
    ExperimentConfig b = a;
    b.output_dir = "elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    b.seed = a.seed + 1;
    CHECK(config_hash(a) != config_hash(b));
    CHECK(verification_hash(a) == verification_hash(b));
    CHECK(hash_json(nlohmann::json{{"a", 1}}).size() == 16);
}

TEST_CASE("checkpoints round trip bitwise", "[io]") {
    const fs::path dir = scratch_dir("ckpt");
    io::Checkpoint c;
    c.arch = Architecture{2, {5, 3}};
    c.theta = net::init_params(c.arch, 8);
    c.theta[0] = 0.1 + 0.2;  // not representable in a short decimal
    c.radius = 2.4576;
    c.region_selected = true;
    c.adapted_to = ParamVector{SystemId::InvertedPendulum, {1.2, 0.15, 9.81, 0.1}};
    c.samples_used = 50;
    c.steps_used = 10;
    c.config_hash = "0123456789abcdef";
    c.seed = 3;
    io::save_checkpoint(dir / "ck.json", c);
    CHECK_FALSE(fs::exists(dir / "ck.json.tmp"));

    const io::Checkpoint back = io::load_checkpoint(dir / "ck.json", c.arch);
    CHECK(back.theta == c.theta);
    CHECK(back.radius == c.radius);
    CHECK(back.adapted_to->values == c.adapted_to->values);
    CHECK(back.samples_used == 50);
    CHECK(back.config_hash == c.config_hash);

    CHECK_THROWS_AS(io::load_checkpoint(dir / "ck.json", Architecture{2, {5, 4}}), ArchMismatch);
    CHECK_THROWS_AS(io::load_checkpoint(dir / "missing.json", c.arch), MissingArtifact);

    nlohmann::json j = io::to_json(c);
    j["theta"].erase(0);
    io::write_json(dir / "short.json", j);
    CHECK_THROWS_AS(io::load_checkpoint(dir / "short.json", c.arch), ArchMismatch);
    fs::remove_all(dir);
}

TEST_CASE("atomic writes and timing paths", "[io]") {
    const fs::path dir = scratch_dir("atomic");
    io::write_atomic(dir / "nested" / "a.txt", "one");
    io::write_atomic(dir / "nested" / "a.txt", "two");
    CHECK(io::read_text(dir / "nested" / "a.txt") == "two");
    CHECK_FALSE(fs::exists(dir / "nested" / "a.txt.tmp"));
    CHECK(io::timing_path(dir / "compare.json") == dir / "compare.timing.json");
    fs::remove_all(dir);
}

TEST_CASE("stochastic labels and CSV layout", "[io]") {
    CHECK(io::stochastic_label(load_preset("ip_stochastic_l")) == "(l)");
    CHECK(io::stochastic_label(load_preset("ip_stochastic_lmgb")) == "(l, m, g, b)");
    CHECK(io::stochastic_label(load_preset("mg3_dc12")) == "(dc1, dc2)");
    CHECK(io::stochastic_label(load_preset("cf_mrd")) == "(m, r, d)");

    CHECK(io::loss_curve_csv({1.0, 0.5}).rfind("step,", 0) == 0);
}
