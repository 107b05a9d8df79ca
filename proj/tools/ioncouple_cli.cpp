// Command-line front end. Talks to the library only through ioncouple.h.
//
//   ioncouple <experiment> --config <path> [--out <dir>] [--format csv|json] [--seed <u64>]
//
// Exit status: 0 success, 2 configuration or usage error, 3 numerical failure, 1 anything else.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ioncouple.h"

namespace {

int exit_code(icp_status s) {
    switch (s) {
        case ICP_OK: return 0;
        case ICP_ERR_CONFIG: return 2;
        case ICP_ERR_NUMERICAL:
        case ICP_ERR_UNDEFINED: return 3;
        default: return 1;
    }
}

int fail(icp_status s, const char *stage) {
    std::fprintf(stderr, "ioncouple: %s: %s: %s\n", stage, icp_status_name(s), icp_last_error());
    return exit_code(s);
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Simulate mode coupling and repeated QND readout in mixed-species ion crystals"};
    app.set_version_flag("--version", icp_version());
    std::string experiment, config_path, out_dir, format;
    std::optional<std::uint64_t> seed;
    app.add_option("experiment", experiment,
                   "modes | couple | scan-freq | scan-time | hom | ramsey | swap-decay | qnd | design-voltages")
        ->required();
    app.add_option("--config", config_path, "configuration file")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (default: [output] directory or .)");
    app.add_option("--format", format, "csv or json (default: [output] format or csv)")
        ->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--seed", seed, "64-bit seed, overrides [experiment] seed");
    app.add_flag("-q,--quiet", "do not list written files");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 2;
    }

    icp_config *cfg = nullptr;
    if (auto s = icp_config_load(config_path.c_str(), &cfg)) return fail(s, config_path.c_str());
    if (seed) icp_config_set_seed(cfg, *seed);

    icp_result *res = nullptr;
    auto s = icp_run(cfg, experiment.c_str(), &res);
    icp_config_free(cfg);
    if (s) return fail(s, experiment.c_str());

    for (size_t i = 0; i < icp_result_warning_count(res); ++i) std::fprintf(stderr, "warning: %s\n", icp_result_warning(res, i));

    char *written = nullptr;
    s = icp_result_write(res, out_dir.empty() ? nullptr : out_dir.c_str(), format.empty() ? nullptr : format.c_str(), nullptr,
                         &written);
    icp_result_free(res);
    if (s) return fail(s, "write");
    if (!app.count("--quiet")) std::fputs(written, stdout);
    icp_string_free(written);
    return 0;
}
