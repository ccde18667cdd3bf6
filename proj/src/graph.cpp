#include "dgerc/graph.hpp"

#include <algorithm>
#include <string>

namespace dgerc {

RelationalSubgraphs build_subgraphs(const IdTensor& speakers, const MaskTensor& mask,
                                    int window) {
  if (window < 0) throw ConfigError("window must be >= 0, got " + std::to_string(window));
  if (speakers.rank() != 2 || speakers.shape() != mask.shape()) {
    throw ShapeError("build_subgraphs: speakers " + shape_str(speakers.shape()) + " vs mask " +
                     shape_str(mask.shape()));
  }
  const std::size_t B = speakers.dim(0);
  const std::size_t L = speakers.dim(1);
  const std::size_t w = static_cast<std::size_t>(window);
  RelationalSubgraphs g{IdTensor({B, L, L}), IdTensor({B, L, L}), window};
  for (std::size_t b = 0; b < B; ++b) {
    const int* spk = speakers.data() + b * L;
    const std::uint8_t* m = mask.data() + b * L;
    int* s = g.adj_s.data() + b * L * L;
    int* c = g.adj_c.data() + b * L * L;
    for (std::size_t i = 0; i < L; ++i) {
      if (!m[i]) continue;
      s[i * L + i] = kSelfLoop;
      c[i * L + i] = kSelfLoop;
      // only the window band is visited
      const std::size_t hi = std::min(L - 1, i + w);
      for (std::size_t j = i + 1; j <= hi; ++j) {
        if (!m[j]) continue;
        if (spk[i] == spk[j]) {
          s[i * L + j] = kIntraFuture;
          s[j * L + i] = kIntraPast;
        } else {
          c[i * L + j] = kInterFuture;
          c[j * L + i] = kInterPast;
        }
      }
    }
  }
  return g;
}

}  // namespace dgerc
