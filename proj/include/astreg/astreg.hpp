#pragma once

#include "astreg/harness/emit.hpp"
#include "astreg/harness/experiment.hpp"
#include "astreg/harness/gradcheck.hpp"
#include "astreg/harness/metrics.hpp"
#include "astreg/harness/split.hpp"
#include "astreg/harness/train.hpp"
#include "astreg/models.hpp"
#include "astreg/nn/adam.hpp"
#include "astreg/nn/checkpoint.hpp"
#include "astreg/nn/grad_check.hpp"
#include "astreg/treedata/corpus_io.hpp"
#include "astreg/treedata/scaler.hpp"
#include "astreg/treedata/stats.hpp"
#include "astreg/treedata/synth.hpp"
