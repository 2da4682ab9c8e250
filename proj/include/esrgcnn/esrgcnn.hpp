#pragma once

#include "esrgcnn/autodiff.hpp"
#include "esrgcnn/checkpoint.hpp"
#include "esrgcnn/data.hpp"
#include "esrgcnn/error.hpp"
#include "esrgcnn/image_io.hpp"
#include "esrgcnn/metrics.hpp"
#include "esrgcnn/model.hpp"
#include "esrgcnn/ops.hpp"
#include "esrgcnn/parallel.hpp"
#include "esrgcnn/summary.hpp"
#include "esrgcnn/tensor.hpp"
#include "esrgcnn/training.hpp"
