// Copyright 2026 The provdp Authors
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

// Umbrella header.

#pragma once

#include "provdp/attack.hpp"
#include "provdp/corpus.hpp"
#include "provdp/dp.hpp"
#include "provdp/error.hpp"
#include "provdp/experiment.hpp"
#include "provdp/fed.hpp"
#include "provdp/io.hpp"
#include "provdp/levenshtein.hpp"
#include "provdp/model.hpp"
#include "provdp/random.hpp"
#include "provdp/secagg.hpp"
