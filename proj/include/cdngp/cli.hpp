// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace cdngp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Subcommands synth, train, render, eval and report.
int run_cli(int argc, char** argv);

}  // namespace cdngp
