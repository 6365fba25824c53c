// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// The boxgan command line.
//
//   boxgan <subcommand> [flags]
//
// Subcommands: synth, pretrain-det, train1, train2, generate, eval, diagnose,
// plot. Every subcommand accepts --config <json>, --seed <int> and --out <dir>,
// writes only under --out, and leaves a manifest.json there. Passing
// --from-manifest <file> re-runs a recorded invocation; flags given alongside
// it override the recorded ones.
//
// Exit codes: 0 success, 1 usage error, 2 data or config error, 3 training
// divergence.

#pragma once

#include <string>
#include <vector>

namespace boxgan::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kDiverged = 3 };

/// `args` excludes the program name.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace boxgan::cli
