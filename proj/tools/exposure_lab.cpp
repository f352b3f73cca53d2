// exposure-lab: run the exposure pipeline stages from a config file.
//
//   exposure-lab <stage> --config <path> [--out <dir>] [--threads N] [--seed N]
//
// Exit codes: 0 ok, 2 validation, 3 data error, 4 numerical failure.

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "exposurelab/common.hpp"
#include "exposurelab/pipeline.hpp"

namespace {

int exit_code(exposurelab::ErrorKind kind) {
    switch (kind) {
        case exposurelab::ErrorKind::validation: return 2;
        case exposurelab::ErrorKind::data: return 3;
        case exposurelab::ErrorKind::numerical: return 4;
    }
    return 3;
}

}  // namespace

int main(int argc, char** argv) {
    namespace pl = exposurelab::pipeline;

    CLI::App app{"AI exposure indices, new-work shares and panel regressions"};
    std::string stage;
    std::filesystem::path config_path;
    std::optional<std::filesystem::path> out_dir;
    unsigned threads = 1;
    std::optional<std::uint64_t> seed;
    bool quiet = false;

    app.add_option("stage", stage, "ingest, scores, matrices, exposure, newwork, panel, estimate or all")->required();
    app.add_option("-c,--config", config_path, "INI run configuration")->required();
    app.add_option("-o,--out", out_dir, "output directory (overrides [output] dir)");
    app.add_option("-t,--threads", threads, "worker threads for similarity matrices")->check(CLI::Range(1u, 256u));
    app.add_option("-s,--seed", seed, "seed of the built-in test embedder (overrides [semlink] embedding_seed)");
    app.add_flag("-q,--quiet", quiet, "suppress cache notices and warnings");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const auto which = pl::stage_from_string(stage);
        auto config = pl::RunConfig::load(config_path);
        if (out_dir) config.out_dir = std::filesystem::absolute(*out_dir).lexically_normal();
        if (seed) config.embedding_seed = *seed;
        exposurelab::set_warnings_enabled(!quiet);

        pl::RunOptions options;
        options.threads = threads;
        options.verbose = !quiet;
        const auto outcomes = pl::run(which, config, options);
        std::size_t hits = 0;
        for (const auto& o : outcomes) hits += o.cache_hit;
        if (!quiet)
            std::cerr << "exposure-lab: " << outcomes.size() << " stage(s), " << hits << " cache hit(s); outputs in "
                      << config.out_dir.string() << '\n';
        return 0;
    } catch (const exposurelab::Error& e) {
        std::cerr << "exposure-lab: error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "exposure-lab: error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "exposure-lab: error: " << e.what() << '\n';
        return 3;
    }
}
