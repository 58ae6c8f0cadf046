#include <catch_amalgamated.hpp>

#include "hmvae/data.hpp"
