#pragma once

#include "noisr/common.hpp"
#include "noisr/image.hpp"
#include "noisr/image_io.hpp"
#include "noisr/rng.hpp"
#include "noisr/noise.hpp"
#include "noisr/resample.hpp"
#include "noisr/phase_congruency.hpp"
#include "noisr/metrics.hpp"
#include "noisr/tensor.hpp"
#include "noisr/network.hpp"
#include "noisr/checkpoint.hpp"
#include "noisr/loss.hpp"
#include "noisr/trainer.hpp"
#include "noisr/dataset.hpp"
