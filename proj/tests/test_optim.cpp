#include <catch_amalgamated.hpp>

#include "hmvae/optim.hpp"
