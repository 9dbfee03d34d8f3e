#ifndef HISTOCUBE_HISTOCUBE_HPP
#define HISTOCUBE_HISTOCUBE_HPP

#include "histocube/classifier.hpp"
#include "histocube/combinators.hpp"
#include "histocube/grid.hpp"
#include "histocube/local_histogram.hpp"
#include "histocube/model.hpp"
#include "histocube/occlusion.hpp"
#include "histocube/texture_models.hpp"
#include "histocube/window.hpp"

#endif  // HISTOCUBE_HISTOCUBE_HPP
