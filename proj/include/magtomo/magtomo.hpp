#pragma once

#include "distributions.hpp"
#include "error.hpp"
#include "fock.hpp"
#include "mle.hpp"
#include "parallel.hpp"
#include "philox.hpp"
#include "pipeline.hpp"
#include "povm.hpp"
#include "report_io.hpp"
#include "sampler.hpp"
#include "snr.hpp"
#include "states.hpp"
#include "types.hpp"
#include "wigner.hpp"
