// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sir/adamw.hpp"
#include "sir/block.hpp"
#include "sir/cascade.hpp"
#include "sir/checkpoint.hpp"
#include "sir/config.hpp"
#include "sir/data.hpp"
#include "sir/error.hpp"
#include "sir/metrics.hpp"
#include "sir/ndgrad.hpp"
#include "sir/random.hpp"
#include "sir/scorer.hpp"
#include "sir/text.hpp"
#include "sir/train.hpp"
#include "sir/run_config.hpp"
