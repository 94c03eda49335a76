#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "cafield/cli/config.hpp"
#include "cafield/net/config.hpp"

namespace cafield::cli {

// Each command writes under cfg "out", records what it produced in
// <out>/artifacts.txt and returns the process exit code. Errors propagate as
// cafield::Error.

/// Synthetic dataset: one object grid per instance plus manifest.txt.
/// Instance i of a category uses seed * 1000000 + i.
int run_gen(const RunConfig& cfg, std::ostream& out);
/// Trains on the dataset manifest; writes model.ckpt and train.log.
int run_train(const RunConfig& cfg, std::ostream& out);
/// One canon/<name>.json record per input grid. Failed items are reported on
/// err and the batch continues; returns 2 if any item failed.
int run_canonicalize(const RunConfig& cfg, std::ostream& out, std::ostream& err);
/// One metrics_<canonicalizer>.json report per requested canonicalizer.
int run_eval(const RunConfig& cfg, std::ostream& out);
/// Runs the verification suite; returns 4 if any check fails.
int run_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err);
/// Prints the header of a grid, checkpoint, manifest or JSON record.
int run_inspect(const RunConfig& cfg, std::ostream& out);

net::ModelConfig model_config(const RunConfig& cfg);

/// Parses argv, dispatches to a command and maps errors to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// FNV-1a 64 of a file's bytes.
std::uint64_t file_digest(const std::filesystem::path& path);

}  // namespace cafield::cli
