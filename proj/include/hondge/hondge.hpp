#pragma once
// Umbrella header: pulls in the whole toolkit.

#include "hondge/corpus.hpp"
#include "hondge/ensemble.hpp"
#include "hondge/evaluation.hpp"
#include "hondge/graph.hpp"
#include "hondge/hon.hpp"
#include "hondge/nn.hpp"
#include "hondge/rng.hpp"
#include "hondge/sampler.hpp"
#include "hondge/synth.hpp"
#include "hondge/util.hpp"
#include "hondge/verify.hpp"
