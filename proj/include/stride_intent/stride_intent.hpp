#pragma once

#include "stride_intent/common.hpp"
#include "stride_intent/csv.hpp"
#include "stride_intent/signal.hpp"
#include "stride_intent/ssa.hpp"
#include "stride_intent/pca.hpp"
#include "stride_intent/gait.hpp"
#include "stride_intent/filter.hpp"
#include "stride_intent/spectrum.hpp"
#include "stride_intent/ica.hpp"
#include "stride_intent/epoching.hpp"
#include "stride_intent/csp.hpp"
#include "stride_intent/classify.hpp"
#include "stride_intent/evaluate.hpp"
#include "stride_intent/synth.hpp"
#include "stride_intent/pipeline.hpp"
