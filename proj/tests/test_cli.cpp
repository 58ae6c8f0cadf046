#include <catch_amalgamated.hpp>

#include "hmvae/cli.hpp"
