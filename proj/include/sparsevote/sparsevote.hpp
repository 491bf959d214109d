#pragma once

#include "sparsevote/core.hpp"
#include "sparsevote/rng.hpp"
#include "sparsevote/datagen.hpp"
#include "sparsevote/lasso.hpp"
#include "sparsevote/debias.hpp"
#include "sparsevote/protocol.hpp"
#include "sparsevote/fusion.hpp"
#include "sparsevote/theory.hpp"
#include "sparsevote/harness.hpp"
#include "sparsevote/io.hpp"
