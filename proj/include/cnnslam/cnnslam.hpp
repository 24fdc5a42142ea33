#pragma once

#include "cnnslam/config.hpp"
#include "cnnslam/dataset.hpp"
#include "cnnslam/errors.hpp"
#include "cnnslam/evaluation.hpp"
#include "cnnslam/geometry.hpp"
#include "cnnslam/global_model.hpp"
#include "cnnslam/image.hpp"
#include "cnnslam/keyframe.hpp"
#include "cnnslam/pipeline.hpp"
#include "cnnslam/pose_graph.hpp"
#include "cnnslam/prediction.hpp"
#include "cnnslam/refinement.hpp"
#include "cnnslam/tracking.hpp"
