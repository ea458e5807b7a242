// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sdanet/autodiff.hpp"
#include "sdanet/data/dataset.hpp"
#include "sdanet/data/dsp.hpp"
#include "sdanet/data/recording.hpp"
#include "sdanet/data/specaug.hpp"
#include "sdanet/data/windows.hpp"
#include "sdanet/eval/evaluate.hpp"
#include "sdanet/eval/synth.hpp"
#include "sdanet/fault.hpp"
#include "sdanet/gradcheck.hpp"
#include "sdanet/log.hpp"
#include "sdanet/model/checkpoint.hpp"
#include "sdanet/model/config.hpp"
#include "sdanet/model/params.hpp"
#include "sdanet/model/sdanet.hpp"
#include "sdanet/ops.hpp"
#include "sdanet/rng.hpp"
#include "sdanet/serialize.hpp"
#include "sdanet/tensor.hpp"
#include "sdanet/train/adam.hpp"
#include "sdanet/train/schedule.hpp"
#include "sdanet/train/trainer.hpp"
