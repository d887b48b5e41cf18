#pragma once

// Hand-computed one-vs-rest precision and recall for small prediction sets.

#include <vector>

namespace oracle {

struct PrfFixture {
  std::vector<int> pred, truth, labels;
  // Expected per-label precision and recall, in label order.
  std::vector<double> p, r;
};

inline double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2 * p * r / (p + r); }

inline std::vector<PrfFixture> prf_fixtures() {
  return {
      {{0, 1}, {0, 1}, {0, 1}, {1, 1}, {1, 1}},
      {{1, 0}, {0, 1}, {0, 1}, {0, 0}, {0, 0}},
      {{0, 0, 0, 0}, {0, 0, 1, 1}, {0, 1}, {0.5, 0}, {1, 0}},
      {{0, 1, 1, 1}, {0, 0, 1, 1}, {0, 1}, {1, 2.0 / 3}, {0.5, 1}},
      {{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 1, 1}, {1, 1, 1}},
      {{1, 1, 1}, {1, 2, 3}, {1, 2, 3}, {1.0 / 3, 0, 0}, {1, 0, 0}},
      {{16, 32, 64, 64}, {16, 32, 32, 64}, {16, 32, 64}, {1, 1, 0.5}, {1, 0.5, 1}},
      {{3, 3, 5, 5, 5}, {3, 5, 5, 5, 5}, {3, 5}, {0.5, 1}, {1, 0.75}},
      {{0}, {0}, {0, 1}, {1, 0}, {1, 0}},
      {{2, 2, 2}, {2, 2, 2}, {1, 2}, {0, 1}, {0, 1}},
      {{0, 1, 2, 0, 1, 2}, {0, 0, 1, 1, 2, 2}, {0, 1, 2}, {0.5, 0, 0.5}, {0.5, 0, 0.5}},
      {{0, 0, 1}, {1, 1, 0}, {0, 1}, {0, 0}, {0, 0}},
      {{7, 7, 7, 0}, {7, 7, 0, 0}, {0, 7}, {1, 2.0 / 3}, {0.5, 1}},
      {{1, 1}, {1, 1}, {0, 1}, {0, 1}, {0, 1}},
      {{1, 3, 5, 7}, {1, 3, 5, 5}, {1, 3, 5, 7}, {1, 1, 1, 0}, {1, 1, 0.5, 0}},
      {{2, 1, 2, 1, 2}, {1, 1, 2, 2, 2}, {1, 2}, {0.5, 2.0 / 3}, {0.5, 2.0 / 3}},
      {{0, 0, 0, 1, 1, 1}, {0, 1, 1, 1, 1, 1}, {0, 1}, {1.0 / 3, 1}, {1, 0.6}},
      {{4, 4, 4, 4}, {4, 4, 4, 8}, {4, 8}, {0.75, 0}, {1, 0}},
      {{9, 8}, {8, 9}, {8, 9, 10}, {0, 0, 0}, {0, 0, 0}},
      {{0, 1, 1, 0}, {0, 1, 1, 0}, {0, 1}, {1, 1}, {1, 1}},
  };
}

}  // namespace oracle
