#ifndef HISTOCUBE_IO_HPP
#define HISTOCUBE_IO_HPP

#include "histocube/io/classifier_file.hpp"
#include "histocube/io/cube_file.hpp"
#include "histocube/io/file.hpp"
#include "histocube/io/manifest.hpp"
#include "histocube/io/model_config.hpp"
#include "histocube/io/pnm.hpp"

#endif  // HISTOCUBE_IO_HPP
