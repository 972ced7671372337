// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// The evalbench command line, callable in-process.
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace evalbench::cli {

/// Exit codes are part of the interface.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;

/// Runs one invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "http://host:port" from a URL or a bare "host:port".
std::string normalize_server_url(const std::string& url);

} // namespace evalbench::cli
