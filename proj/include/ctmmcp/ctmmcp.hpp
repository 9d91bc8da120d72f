// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ctmmcp/actuator.hpp"
#include "ctmmcp/affect_loop.hpp"
#include "ctmmcp/core/canonical_json.hpp"
#include "ctmmcp/core/digest.hpp"
#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/core/tensor.hpp"
#include "ctmmcp/core/weight_file.hpp"
#include "ctmmcp/ctm_runtime.hpp"
#include "ctmmcp/harness/commands.hpp"
#include "ctmmcp/harness/config.hpp"
#include "ctmmcp/harness/episode.hpp"
#include "ctmmcp/harness/featurizer.hpp"
#include "ctmmcp/harness/model.hpp"
#include "ctmmcp/harness/tasks.hpp"
#include "ctmmcp/harness/world.hpp"
#include "ctmmcp/mcp_router.hpp"
#include "ctmmcp/parallel_consensus.hpp"
#include "ctmmcp/perception.hpp"
#include "ctmmcp/transport.hpp"
