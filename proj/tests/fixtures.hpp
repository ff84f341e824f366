#pragma once

#include <vector>

#include <incopt/workload.hpp>

namespace testfx {

/** The TPC-H shaped fixtures plus a few seeded random shapes of 3 to 6 relations. */
inline std::vector<incopt::Fixture> fixtures(std::size_t random_per_shape = 2, std::size_t max_relations = 6)
{
    std::vector<incopt::Fixture> out = incopt::tpch_fixtures();
    for (auto shape : {incopt::Shape::Chain, incopt::Shape::Star, incopt::Shape::Clique}) {
        for (std::size_t n = 3; n <= max_relations; ++n) {
            for (std::size_t s = 0; s != random_per_shape; ++s)
                out.push_back(incopt::random_fixture({shape, n, 1000 * n + s, true}));
        }
    }
    return out;
}

}
