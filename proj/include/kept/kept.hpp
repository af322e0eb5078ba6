#pragma once

#include "kept/autograd.hpp"
#include "kept/checkpoint.hpp"
#include "kept/cli.hpp"
#include "kept/data.hpp"
#include "kept/eval.hpp"
#include "kept/gradcheck.hpp"
#include "kept/mapping.hpp"
#include "kept/metrics.hpp"
#include "kept/model.hpp"
#include "kept/rng.hpp"
#include "kept/runconfig.hpp"
#include "kept/tensor.hpp"
#include "kept/train.hpp"
