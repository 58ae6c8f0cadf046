#include <catch_amalgamated.hpp>

#include "hmvae/model.hpp"
