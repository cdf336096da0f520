// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "densedrop/autograd.hpp"
#include "densedrop/checkpoint.hpp"
#include "densedrop/cifar.hpp"
#include "densedrop/config.hpp"
#include "densedrop/densenet.hpp"
#include "densedrop/dropout.hpp"
#include "densedrop/errors.hpp"
#include "densedrop/mask_stats.hpp"
#include "densedrop/ops.hpp"
#include "densedrop/rng.hpp"
#include "densedrop/schedules.hpp"
#include "densedrop/tensor.hpp"
#include "densedrop/train.hpp"
