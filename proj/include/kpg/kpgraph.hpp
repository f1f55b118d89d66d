#pragma once

#include "kpg/core/errors.hpp"
#include "kpg/core/log.hpp"
#include "kpg/core/tensor.hpp"
#include "kpg/core/ops.hpp"
#include "kpg/core/adam.hpp"
#include "kpg/core/checkpoint.hpp"
#include "kpg/imaging/image.hpp"
#include "kpg/imaging/affine.hpp"
#include "kpg/imaging/transforms.hpp"
#include "kpg/imaging/io.hpp"
#include "kpg/detector/harris.hpp"
#include "kpg/detector/ground_truth.hpp"
#include "kpg/detector/keypoint_csv.hpp"
#include "kpg/model/layers.hpp"
#include "kpg/model/cnn.hpp"
#include "kpg/model/gnn.hpp"
#include "kpg/model/contrastive.hpp"
#include "kpg/model/model.hpp"
#include "kpg/matcher/matcher.hpp"
#include "kpg/mosaic/homography.hpp"
#include "kpg/mosaic/panorama.hpp"
#include "kpg/pipeline/config.hpp"
#include "kpg/pipeline/synth.hpp"
#include "kpg/pipeline/dataset.hpp"
#include "kpg/pipeline/views.hpp"
#include "kpg/pipeline/evaluate.hpp"
#include "kpg/pipeline/train.hpp"
#include "kpg/pipeline/ablation.hpp"
#include "kpg/pipeline/mosaic.hpp"
