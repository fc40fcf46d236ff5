#pragma once

#include "capev/audio_io.hpp"
#include "capev/augmentation.hpp"
#include "capev/config.hpp"
#include "capev/dataset.hpp"
#include "capev/embedding.hpp"
#include "capev/experiment.hpp"
#include "capev/features.hpp"
#include "capev/grid_search.hpp"
#include "capev/manifest.hpp"
#include "capev/metrics.hpp"
#include "capev/model_artifact.hpp"
#include "capev/neural.hpp"
#include "capev/regressor.hpp"
#include "capev/report.hpp"
#include "capev/split.hpp"
#include "capev/synthetic.hpp"
