#pragma once

// Umbrella header.

#include "nlaslr/augment.hpp"
#include "nlaslr/autograd.hpp"
#include "nlaslr/conv.hpp"
#include "nlaslr/error.hpp"
#include "nlaslr/eval.hpp"
#include "nlaslr/glosslex.hpp"
#include "nlaslr/gradcheck.hpp"
#include "nlaslr/heads.hpp"
#include "nlaslr/heatmap.hpp"
#include "nlaslr/model.hpp"
#include "nlaslr/params.hpp"
#include "nlaslr/random.hpp"
#include "nlaslr/rawtensor.hpp"
#include "nlaslr/synthdata.hpp"
#include "nlaslr/tensor.hpp"
#include "nlaslr/trainer.hpp"
#include "nlaslr/vknet.hpp"
