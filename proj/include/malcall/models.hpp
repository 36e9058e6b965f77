#pragma once

#include "malcall/models/common.hpp"
#include "malcall/models/linear.hpp"
#include "malcall/models/mlp.hpp"
#include "malcall/models/model.hpp"
#include "malcall/models/tree.hpp"
