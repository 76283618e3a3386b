#pragma once

// Umbrella header.

#include "selftrain/backend.hpp"
#include "selftrain/binarize.hpp"
#include "selftrain/cky.hpp"
#include "selftrain/config.hpp"
#include "selftrain/distribution.hpp"
#include "selftrain/error.hpp"
#include "selftrain/evaluation.hpp"
#include "selftrain/generation.hpp"
#include "selftrain/grammar.hpp"
#include "selftrain/log.hpp"
#include "selftrain/orchestrator.hpp"
#include "selftrain/pcfg.hpp"
#include "selftrain/prompt.hpp"
#include "selftrain/report.hpp"
#include "selftrain/rng.hpp"
#include "selftrain/sampler.hpp"
#include "selftrain/selection.hpp"
#include "selftrain/tree.hpp"
