#pragma once

// Umbrella header.

#include "espresso/audio.hpp"
#include "espresso/corpus.hpp"
#include "espresso/error.hpp"
#include "espresso/eval.hpp"
#include "espresso/mid_level.hpp"
#include "espresso/model_io.hpp"
#include "espresso/numerics.hpp"
#include "espresso/retrieval.hpp"
#include "espresso/synthetic.hpp"
#include "espresso/text_encoder.hpp"
#include "espresso/training.hpp"
#include "espresso/version.hpp"
