#pragma once

#include "trajfuse/core.hpp"
#include "trajfuse/ingest.hpp"
#include "trajfuse/macro_state.hpp"
#include "trajfuse/micro_candidates.hpp"
#include "trajfuse/fusion.hpp"
#include "trajfuse/evaluation.hpp"
#include "trajfuse/sim_oracle.hpp"
#include "trajfuse/io.hpp"
#include "trajfuse/config.hpp"
#include "trajfuse/pipeline.hpp"
