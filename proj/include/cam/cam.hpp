#pragma once

#include "cam/attention.hpp"
#include "cam/checkpoint.hpp"
#include "cam/config.hpp"
#include "cam/data.hpp"
#include "cam/dataset_io.hpp"
#include "cam/error.hpp"
#include "cam/matrix.hpp"
#include "cam/model.hpp"
#include "cam/parallel.hpp"
#include "cam/random.hpp"
#include "cam/recurrent.hpp"
#include "cam/tensor.hpp"
#include "cam/training.hpp"
