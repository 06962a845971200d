#pragma once

#include <cstddef>
#include <vector>

namespace wpcm {

// One rolling-window segment of (wind speed, normalized power) pairs.
struct Segment {
  std::size_t index = 0;  // position in the stream, 0-based
  std::size_t first = 0;  // index of the first record in the source list
  std::vector<double> speed;
  std::vector<double> power;

  std::size_t size() const { return speed.size(); }
  bool empty() const { return speed.empty(); }
};

using SegmentStream = std::vector<Segment>;

}  // namespace wpcm
