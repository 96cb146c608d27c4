#pragma once

#include "mgce/adam.hpp"
#include "mgce/core.hpp"
#include "mgce/datagen.hpp"
#include "mgce/dbscan.hpp"
#include "mgce/encoder.hpp"
#include "mgce/ensemble.hpp"
#include "mgce/error.hpp"
#include "mgce/eval.hpp"
#include "mgce/feature_io.hpp"
#include "mgce/losses.hpp"
#include "mgce/memory_bank.hpp"
#include "mgce/rng.hpp"
#include "mgce/sampler.hpp"
#include "mgce/trainer.hpp"
