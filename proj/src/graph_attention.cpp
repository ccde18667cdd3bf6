#include "dgerc/graph_attention.hpp"

#include <vector>

namespace dgerc::ops {

namespace {

template <std::floating_point T>
void expect_shape(const Var<T>& v, const Shape& want, const char* what) {
  if (v.shape() != want) {
    throw ShapeError(std::string("graph_attention: ") + what + " has shape " +
                     shape_str(v.shape()) + ", expected " + shape_str(want));
  }
}

}  // namespace

template <std::floating_point T>
GraphAttentionResult<T> graph_attention(std::shared_ptr<const kernels::SparseAdjacency> adj,
                                        const GraphAttentionInputs<T>& in, T slope) {
  const Shape& vs = in.values.shape();
  if (vs.size() != 3 || vs[0] != adj->batch || vs[1] != adj->length) {
    throw ShapeError("graph_attention: values " + shape_str(vs) + " do not match graph [" +
                     std::to_string(adj->batch) + "," + std::to_string(adj->length) + "]");
  }
  const Shape node_shape{vs[0], vs[1]};
  const Shape rel_shape{kernels::kRelationIds};
  expect_shape(in.q_pos, node_shape, "q_pos");
  expect_shape(in.k_pos, node_shape, "k_pos");
  const bool rel = in.rel_pos.valid();
  const bool diff = in.q_neg.valid();
  if (rel) expect_shape(in.rel_pos, rel_shape, "rel_pos");
  if (diff) {
    expect_shape(in.q_neg, node_shape, "q_neg");
    expect_shape(in.k_neg, node_shape, "k_neg");
    if (rel) expect_shape(in.rel_neg, rel_shape, "rel_neg");
    if (in.lambda.value().size() != 1) throw ShapeError("graph_attention: lambda must be scalar");
  }

  auto make_args = [adj, rel, diff, slope](const Tape<T>& t, const GraphAttentionInputs<T>& v) {
    kernels::GraphAttentionArgs<T> a;
    a.adj = adj.get();
    a.width = t.value(v.values).dim(2);
    a.values = t.value(v.values).data();
    a.q_pos = t.value(v.q_pos).data();
    a.k_pos = t.value(v.k_pos).data();
    if (rel) a.rel_pos = t.value(v.rel_pos).data();
    if (diff) {
      a.q_neg = t.value(v.q_neg).data();
      a.k_neg = t.value(v.k_neg).data();
      if (rel) a.rel_neg = t.value(v.rel_neg).data();
      a.lambda = t.value(v.lambda)[0];
    }
    a.slope = slope;
    return a;
  };

  Tape<T>& tape = *in.values.tape();
  auto cache = std::make_shared<kernels::GraphAttentionCache<T>>();
  Tensor<T> out(vs);
  kernels::parallel::graph_attention_forward(make_args(tape, in), out.data(), *cache);

  std::vector<Var<T>> deps{in.values, in.q_pos, in.k_pos};
  if (rel) deps.push_back(in.rel_pos);
  if (diff) {
    deps.insert(deps.end(), {in.q_neg, in.k_neg, in.lambda});
    if (rel) deps.push_back(in.rel_neg);
  }
  Var<T> y = tape.record(
      std::move(out), deps,
      [in, cache, make_args, rel, diff](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        kernels::GraphAttentionGrads<T> gr;
        auto sink = [&t](const Var<T>& v) -> T* {
          return t.requires_grad(v) ? t.grad_sink(v).data() : nullptr;
        };
        gr.values = sink(in.values);
        gr.q_pos = sink(in.q_pos);
        gr.k_pos = sink(in.k_pos);
        if (rel) gr.rel_pos = sink(in.rel_pos);
        if (diff) {
          gr.q_neg = sink(in.q_neg);
          gr.k_neg = sink(in.k_neg);
          gr.lambda = sink(in.lambda);
          if (rel) gr.rel_neg = sink(in.rel_neg);
        }
        kernels::parallel::graph_attention_backward(make_args(t, in), *cache, g.data(), gr);
      });
  return {y, cache};
}

template GraphAttentionResult<float> graph_attention<float>(
    std::shared_ptr<const kernels::SparseAdjacency>, const GraphAttentionInputs<float>&, float);
template GraphAttentionResult<double> graph_attention<double>(
    std::shared_ptr<const kernels::SparseAdjacency>, const GraphAttentionInputs<double>&, double);

}  // namespace dgerc::ops
