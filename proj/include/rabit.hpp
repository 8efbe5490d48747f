#pragma once

#include "rabit/analysis.hpp"
#include "rabit/binarize.hpp"
#include "rabit/csv.hpp"
#include "rabit/error.hpp"
#include "rabit/init.hpp"
#include "rabit/io.hpp"
#include "rabit/kernel.hpp"
#include "rabit/loss.hpp"
#include "rabit/matrix.hpp"
#include "rabit/qat.hpp"
#include "rabit/stats.hpp"
#include "rabit/svg.hpp"
#include "rabit/sweep.hpp"
#include "rabit/toy.hpp"
