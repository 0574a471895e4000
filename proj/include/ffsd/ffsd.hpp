// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ffsd/bench.hpp"
#include "ffsd/box.hpp"
#include "ffsd/checkpoint.hpp"
#include "ffsd/config.hpp"
#include "ffsd/dataset.hpp"
#include "ffsd/erf.hpp"
#include "ffsd/eval.hpp"
#include "ffsd/fusion.hpp"
#include "ffsd/kernels.hpp"
#include "ffsd/layers.hpp"
#include "ffsd/matching.hpp"
#include "ffsd/model.hpp"
#include "ffsd/multibox_loss.hpp"
#include "ffsd/nms.hpp"
#include "ffsd/priors.hpp"
#include "ffsd/rng.hpp"
#include "ffsd/scene.hpp"
#include "ffsd/tape.hpp"
#include "ffsd/tensor.hpp"
#include "ffsd/threading.hpp"
#include "ffsd/train.hpp"
