// agent-sim -- runs scenario files through the deterministic harness
#include <CLI11.hpp>

#include <cstdio>

#include "dcs/simnet.hpp"

namespace {

dcs::Bytes read_all(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f)
        throw dcs::Error(dcs::Errc::InvalidScenario, "cannot open " + path);
    dcs::Bytes out;
    std::uint8_t buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0)
        out.insert(out.end(), buf, buf + n);
    std::fclose(f);
    return out;
}

void print_report(const char* name, const dcs::sim::CheckReport& report) {
    std::printf("%s: %s\n", name, report.ok() ? "ok" : "VIOLATIONS");
    for (const auto& v : report.violations)
        std::printf("  violation: %s\n", v.c_str());
    for (const auto& n : report.notes)
        std::printf("  note: %s\n", n.c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic protocol simulation"};
    app.require_subcommand(1);

    std::string scenario_file;
    std::string checks;
    auto* cmd_run = app.add_subcommand("run", "run a scenario file");
    cmd_run->add_option("scenario", scenario_file,
                        "frame-wrapped canonical scenario file")
        ->required();
    cmd_run->add_option("--check", checks,
                        "comma-separated: convergence,confidentiality");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help exits 0; anything else is a usage error, one line, exit 1
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const dcs::Bytes raw = read_all(scenario_file);
        std::size_t offset = 0;
        auto reader = [&](std::uint8_t* dst, std::size_t n) {
            const std::size_t take = std::min(n, raw.size() - offset);
            std::copy(raw.begin() + offset, raw.begin() + offset + take, dst);
            offset += take;
            return take;
        };
        auto payload = dcs::wire::deframe(reader);
        if (!payload)
            throw dcs::Error(dcs::Errc::InvalidScenario, "empty file");
        const dcs::sim::Scenario sc = dcs::sim::decode_scenario(*payload);

        const dcs::sim::RunResult run = dcs::sim::run_scenario(sc);
        std::printf("events: %zu, trace sha256: %s\n", sc.script.size(),
                    dcs::sha256_hex(dcs::sim::trace_bytes(run)).c_str());

        bool failed = false;
        if (checks.find("convergence") != std::string::npos) {
            const auto report = dcs::sim::check_convergence(run);
            print_report("convergence", report);
            failed = failed || !report.ok();
        }
        if (checks.find("confidentiality") != std::string::npos) {
            const auto report = dcs::sim::check_confidentiality(run);
            print_report("confidentiality", report);
            failed = failed || !report.ok();
        }
        return failed ? 1 : 0;
    } catch (const dcs::Error& e) {
        std::fprintf(stderr, "agent-sim: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "agent-sim: %s\n", e.what());
        return 1;
    }
}
