/*
 * Copyright 2026 The kegnn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <iosfwd>

namespace kegnn::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { ok = 0, config_error = 1, data_error = 2, numerical_error = 3 };

/// Entry point of the `kegnn` executable. Writes results to `out` and
/// diagnostics to `err`; never throws.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace kegnn::cli
