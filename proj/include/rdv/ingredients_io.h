// Copyright 2026 The rdv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Terminal ingredients on disk: a JSON document with every matrix stored as
// {rows, cols, data} in row-major order at full double precision.

#ifndef RDV_INGREDIENTS_IO_H_
#define RDV_INGREDIENTS_IO_H_

#include <string>

#include "rdv/models.h"
#include "rdv/terminal.h"

namespace rdv {

std::string ingredients_to_json(const TerminalIngredients& ingredients,
                                const std::string& model_name);

// Throws ConfigError on malformed documents or a model mismatch (pass an
// empty name to skip the check).
TerminalIngredients ingredients_from_json(const std::string& text,
                                          const std::string& model_name);

void save_ingredients(const std::string& path,
                      const TerminalIngredients& ingredients,
                      const std::string& model_name);

TerminalIngredients load_ingredients(const std::string& path,
                                     const AgentModel& model);

}  // namespace rdv

#endif  // RDV_INGREDIENTS_IO_H_
