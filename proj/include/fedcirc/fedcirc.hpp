#pragma once

#include "fedcirc/bench.hpp"
#include "fedcirc/circuit.hpp"
#include "fedcirc/comm_model.hpp"
#include "fedcirc/common.hpp"
#include "fedcirc/dataset.hpp"
#include "fedcirc/federation.hpp"
#include "fedcirc/inference.hpp"
#include "fedcirc/leaf.hpp"
#include "fedcirc/learn.hpp"
#include "fedcirc/metrics.hpp"
#include "fedcirc/partition.hpp"
#include "fedcirc/serialize.hpp"
#include "fedcirc/transport.hpp"
#include "fedcirc/verify.hpp"
