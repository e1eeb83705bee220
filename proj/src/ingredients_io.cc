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

#include "rdv/ingredients_io.h"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rdv {
namespace {

using nlohmann::json;

constexpr char kFormat[] = "rdv-terminal-ingredients";
constexpr int kVersion = 1;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || !data.is_array() ||
      static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ConfigError("ingredients: matrix '" + name + "' has wrong size");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = data.at(static_cast<size_t>(i * cols + j)).get<double>();
    }
  }
  return m;
}

}  // namespace

std::string ingredients_to_json(const TerminalIngredients& in,
                                const std::string& model_name) {
  const json j = {
      {"format", kFormat},
      {"version", kVersion},
      {"model", model_name},
      {"alpha_bar", in.alpha_bar},
      {"lambda_min_qhat", in.lambda_min_qhat},
      {"K", matrix_to_json(in.K)},
      {"P", matrix_to_json(in.P)},
      {"Q_star", matrix_to_json(in.Q_star)},
      {"A", matrix_to_json(in.A)},
      {"B", matrix_to_json(in.B)},
      {"Q", matrix_to_json(in.Q)},
      {"R", matrix_to_json(in.R)},
      {"x_lin", matrix_to_json(in.x_lin)},
      {"u_lin", matrix_to_json(in.u_lin)},
  };
  return j.dump(2) + "\n";
}

TerminalIngredients ingredients_from_json(const std::string& text,
                                          const std::string& model_name) {
  TerminalIngredients in;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kFormat ||
        j.at("version").get<int>() != kVersion) {
      throw ConfigError("ingredients: unsupported format or version");
    }
    const std::string model = j.at("model").get<std::string>();
    if (!model_name.empty() && model != model_name) {
      throw ConfigError("ingredients were synthesized for '" + model +
                        "', not '" + model_name + "'");
    }
    in.alpha_bar = j.at("alpha_bar").get<double>();
    in.lambda_min_qhat = j.at("lambda_min_qhat").get<double>();
    in.K = matrix_from_json(j.at("K"), "K");
    in.P = matrix_from_json(j.at("P"), "P");
    in.Q_star = matrix_from_json(j.at("Q_star"), "Q_star");
    in.A = matrix_from_json(j.at("A"), "A");
    in.B = matrix_from_json(j.at("B"), "B");
    in.Q = matrix_from_json(j.at("Q"), "Q");
    in.R = matrix_from_json(j.at("R"), "R");
    in.x_lin = matrix_from_json(j.at("x_lin"), "x_lin");
    in.u_lin = matrix_from_json(j.at("u_lin"), "u_lin");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("ingredients: malformed document: ") +
                      e.what());
  }
  const Eigen::Index n = in.P.rows();
  const Eigen::Index m = in.K.rows();
  if (in.P.cols() != n || in.K.cols() != n || in.Q_star.rows() != n ||
      in.A.rows() != n || in.B.rows() != n || in.B.cols() != m ||
      in.R.rows() != m || in.x_lin.size() != n || in.u_lin.size() != m) {
    throw ConfigError("ingredients: inconsistent matrix dimensions");
  }
  if (!(in.alpha_bar > 0.0)) {
    throw ConfigError("ingredients: alpha_bar must be positive");
  }
  return in;
}

void save_ingredients(const std::string& path,
                      const TerminalIngredients& ingredients,
                      const std::string& model_name) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write ingredients file '" + path + "'");
  out << ingredients_to_json(ingredients, model_name);
  if (!out) throw Error("failed writing ingredients file '" + path + "'");
}

TerminalIngredients load_ingredients(const std::string& path,
                                     const AgentModel& model) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read ingredients file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  TerminalIngredients ingr = ingredients_from_json(buffer.str(), model.name);
  if (ingr.P.rows() != model.n || ingr.K.rows() != model.m) {
    throw ConfigError("ingredients file '" + path +
                      "' does not match the model dimensions");
  }
  return ingr;
}

}  // namespace rdv
