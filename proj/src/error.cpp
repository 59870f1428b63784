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

#include "asq/error.hpp"

namespace asq {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::format: return "format";
    case ErrorKind::checkpoint: return "checkpoint";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::overflow: return "overflow";
    case ErrorKind::unsupported_scheme: return "unsupported-scheme";
    case ErrorKind::config_path: return "config-path";
    case ErrorKind::config_schema: return "config-schema";
    case ErrorKind::dataset_missing: return "dataset-missing";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace asq
