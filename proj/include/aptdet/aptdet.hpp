// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "aptdet/box.hpp"
#include "aptdet/errors.hpp"
#include "aptdet/eval.hpp"
#include "aptdet/kmeans.hpp"
#include "aptdet/match_loss.hpp"
#include "aptdet/pipeline.hpp"
#include "aptdet/pseudo_labels.hpp"
#include "aptdet/regions.hpp"
#include "aptdet/self_train.hpp"
#include "aptdet/spectral.hpp"
#include "aptdet/tensor_store.hpp"
