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

#ifndef RDV_ERRORS_H_
#define RDV_ERRORS_H_

#include <stdexcept>
#include <string>

namespace rdv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// cos(roll) * cos(pitch) vanishes in the thrust mapping.
class SingularThrustError : public Error {
 public:
  using Error::Error;
};

class NotEquilibriumError : public Error {
 public:
  NotEquilibriumError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class ReferenceOutOfRangeError : public Error {
 public:
  using Error::Error;
};

class SynthesisError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace rdv

#endif  // RDV_ERRORS_H_
