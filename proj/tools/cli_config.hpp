/**
 * Copyright 2026 The ASQ Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Run configuration for the asq command-line tool. The effective config is
// built from, in increasing precedence: built-in defaults, the --config file,
// --set key.path=value overrides, and the dedicated flags (--seed, --bits,
// --scheme, --dequant-mode, --epochs). The defaults double as the schema:
// every key must exist there and keep its JSON type.

#include <filesystem>
#include <string>
#include <vector>

#include "asq/error.hpp"
#include "json.hpp"

namespace asq::cli {

using nlohmann::json;

json default_config();

/// Merges `patch` into `base`, rejecting keys and types the schema lacks.
/// `where` prefixes error paths (e.g. "train").
void merge_checked(json& base, const json& patch, const std::string& where = "");

json load_config_file(const std::filesystem::path& path);

/// "a.b.c=value"; value is parsed as JSON, falling back to a plain string.
void apply_override(json& config, const std::string& assignment);

/// Value at a dotted path; throws a config_schema error naming the path.
const json& at_path(const json& config, const std::string& path);

/// Exit code for an error category; 0 is success, 1 an unexpected failure,
/// 2 a command-line usage error.
int exit_code(ErrorKind kind);

}  // namespace asq::cli
