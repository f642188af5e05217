// Copyright 2026 The ppml-audit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PPML_AUDIT_PPML_AUDIT_HPP_
#define PPML_AUDIT_PPML_AUDIT_HPP_

#include "ppml_audit/accountant.hpp"
#include "ppml_audit/binary_io.hpp"
#include "ppml_audit/checkpoint.hpp"
#include "ppml_audit/dataset.hpp"
#include "ppml_audit/dataset_io.hpp"
#include "ppml_audit/dp_train.hpp"
#include "ppml_audit/error.hpp"
#include "ppml_audit/image_codec.hpp"
#include "ppml_audit/lira.hpp"
#include "ppml_audit/metrics.hpp"
#include "ppml_audit/nn.hpp"
#include "ppml_audit/parallel.hpp"
#include "ppml_audit/pipeline.hpp"
#include "ppml_audit/random.hpp"
#include "ppml_audit/tensor.hpp"

#endif  // PPML_AUDIT_PPML_AUDIT_HPP_
