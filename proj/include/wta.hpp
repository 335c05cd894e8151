#ifndef WTA_HPP_
#define WTA_HPP_

#include "wta/binary_io.hpp"
#include "wta/blur_synth.hpp"
#include "wta/checkpoint.hpp"
#include "wta/cli.hpp"
#include "wta/conv.hpp"
#include "wta/dataset.hpp"
#include "wta/error.hpp"
#include "wta/grad_check.hpp"
#include "wta/kmeans.hpp"
#include "wta/loss.hpp"
#include "wta/metrics.hpp"
#include "wta/model.hpp"
#include "wta/optimizer.hpp"
#include "wta/ppm.hpp"
#include "wta/rng.hpp"
#include "wta/tensor.hpp"
#include "wta/training.hpp"

#endif // WTA_HPP_
