#pragma once

// Umbrella header for the diffusion laboratory.

#include "difflab/autodiff.hpp"
#include "difflab/dataset.hpp"
#include "difflab/denoiser.hpp"
#include "difflab/errors.hpp"
#include "difflab/forward.hpp"
#include "difflab/gaussian.hpp"
#include "difflab/gmm.hpp"
#include "difflab/mlp.hpp"
#include "difflab/rng.hpp"
#include "difflab/sampler.hpp"
#include "difflab/schedule.hpp"
#include "difflab/serialize.hpp"
#include "difflab/svg.hpp"
#include "difflab/tensor.hpp"
#include "difflab/train.hpp"
#include "difflab/vae.hpp"
