#pragma once

#include "gad/anisotropic.hpp"
#include "gad/checkpoint.hpp"
#include "gad/dataset.hpp"
#include "gad/diffusion.hpp"
#include "gad/error.hpp"
#include "gad/gradcheck.hpp"
#include "gad/graph.hpp"
#include "gad/model.hpp"
#include "gad/numerics.hpp"
#include "gad/prepared.hpp"
#include "gad/spectral.hpp"
#include "gad/tape.hpp"
#include "gad/training.hpp"
