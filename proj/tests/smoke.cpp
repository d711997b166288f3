// Includes every public header once; real coverage lives in the test files.

#include <catch2/catch_amalgamated.hpp>

#include "iid/adaptation.hpp"
#include "iid/core.hpp"
#include "iid/dataset_io.hpp"
#include "iid/errors.hpp"
#include "iid/experiment.hpp"
#include "iid/features.hpp"
#include "iid/forest.hpp"
#include "iid/lstm.hpp"
#include "iid/metrics.hpp"
#include "iid/rng.hpp"
#include "iid/simulator.hpp"
#include "iid/version.hpp"

TEST_CASE("headers compile and the library reports a version", "[smoke]") {
  REQUIRE(std::string(iid::kVersion) == "0.1.0");
}
