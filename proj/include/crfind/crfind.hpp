/* Copyright 2026 The crfind Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include "crfind/baseline.hpp"
#include "crfind/config.hpp"
#include "crfind/corpus.hpp"
#include "crfind/error.hpp"
#include "crfind/evaluation.hpp"
#include "crfind/feature_model.hpp"
#include "crfind/induction.hpp"
#include "crfind/inference.hpp"
#include "crfind/model_io.hpp"
#include "crfind/numeric.hpp"
#include "crfind/observation.hpp"
#include "crfind/training.hpp"
