#include <cmath>
#include <fstream>

#include "asyflexa/generators.hpp"
#include "json.hpp"

namespace asyflexa {

namespace {

using nlohmann::json;

json dense_to_json(const std::vector<double>& Q, int n) {
  json rows = json::array();
  for (int r = 0; r < n; ++r) {
    json row = json::array();
    for (int c = 0; c < n; ++c)
      row.push_back(Q[static_cast<std::size_t>(r) * n + c]);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<double> dense_from_json(const json& j, int n) {
  std::vector<double> Q;
  Q.reserve(static_cast<std::size_t>(n) * n);
  if (static_cast<int>(j.size()) != n)
    throw StructuralError("problem json: matrix row count mismatch");
  for (const auto& row : j) {
    if (static_cast<int>(row.size()) != n)
      throw StructuralError("problem json: matrix column count mismatch");
    for (const auto& v : row) Q.push_back(v.get<double>());
  }
  return Q;
}

json quadratic_to_json(const QuadraticSmooth& s, int n) {
  json j;
  j["kind"] = "quadratic_dense";
  j["Q"] = dense_to_json(s.matrix(), n);
  j["q"] = s.linear();
  j["c"] = s.constant();
  j["L_f"] = s.lipschitz();
  j["blockwise_convex"] = s.blockwise_convex();
  return j;
}

json smooth_to_json(const ProblemSpec& spec) {
  const int n = spec.dim();
  if (const auto* d =
          dynamic_cast<const QuadraticSmooth*>(spec.smooth.get())) {
    return quadratic_to_json(*d, n);
  }
  if (const auto* s =
          dynamic_cast<const SparseQuadraticSmooth*>(spec.smooth.get())) {
    json j;
    j["kind"] = "quadratic_sparse";
    const auto& Q = s->matrix();
    json rows = json::array(), cols = json::array(), vals = json::array();
    for (int r = 0; r < Q.n; ++r)
      for (int p = Q.row_ptr[r]; p < Q.row_ptr[r + 1]; ++p) {
        rows.push_back(r);
        cols.push_back(Q.col[p]);
        vals.push_back(Q.val[p]);
      }
    j["triplets"] = {{"rows", rows}, {"cols", cols}, {"vals", vals}};
    j["q"] = s->linear();
    j["c"] = s->constant();
    j["L_f"] = s->lipschitz();
    j["blockwise_convex"] = s->blockwise_convex();
    return j;
  }
  if (const auto* dc =
          dynamic_cast<const DcQuadraticSmooth*>(spec.smooth.get())) {
    const auto* plus = dynamic_cast<const QuadraticSmooth*>(dc->dc_plus());
    const auto* minus = dynamic_cast<const QuadraticSmooth*>(dc->dc_minus());
    if (plus == nullptr || minus == nullptr)
      throw StructuralError("problem json: unsupported DC parts");
    json j;
    j["kind"] = "dc_quadratic";
    j["plus"] = quadratic_to_json(*plus, n);
    j["minus"] = quadratic_to_json(*minus, n);
    j["L_f"] = dc->lipschitz();
    j["blockwise_convex"] = dc->blockwise_convex();
    return j;
  }
  throw StructuralError("problem json: smooth term not serializable");
}

std::shared_ptr<QuadraticSmooth> quadratic_from_json(const json& j,
                                                     PartitionPtr part) {
  const int n = part->dim();
  auto Q = dense_from_json(j.at("Q"), n);
  auto q = j.at("q").get<std::vector<double>>();
  return std::make_shared<QuadraticSmooth>(
      part, std::move(Q), std::move(q), j.value("c", 0.0),
      j.at("L_f").get<double>(), j.value("blockwise_convex", true));
}

SmoothPtr smooth_from_json(const json& j, PartitionPtr part) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "quadratic_dense") return quadratic_from_json(j, part);
  if (kind == "quadratic_sparse") {
    const auto& t = j.at("triplets");
    auto rows = t.at("rows").get<std::vector<int>>();
    auto cols = t.at("cols").get<std::vector<int>>();
    auto vals = t.at("vals").get<std::vector<double>>();
    auto Q = CsrMatrix::from_triplets(part->dim(), rows, cols, vals);
    auto q = j.at("q").get<std::vector<double>>();
    return std::make_shared<SparseQuadraticSmooth>(
        part, std::move(Q), std::move(q), j.value("c", 0.0),
        j.at("L_f").get<double>(), j.value("blockwise_convex", true));
  }
  if (kind == "dc_quadratic") {
    auto plus = quadratic_from_json(j.at("plus"), part);
    auto minus = quadratic_from_json(j.at("minus"), part);
    return std::make_shared<DcQuadraticSmooth>(
        part, plus, minus, j.at("L_f").get<double>(),
        j.value("blockwise_convex", true));
  }
  throw StructuralError("problem json: unknown smooth kind " + kind);
}

json reg_to_json(const Regularizer& g) {
  json j;
  j["kind"] = g.kind();
  if (const auto* l1 = dynamic_cast<const L1Reg*>(&g)) j["lambda"] = l1->lambda();
  return j;
}

RegPtr reg_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "zero") return std::make_shared<ZeroReg>();
  if (kind == "l1") return std::make_shared<L1Reg>(j.at("lambda").get<double>());
  throw StructuralError("problem json: unknown regularizer kind " + kind);
}

json set_to_json(const BlockSet& s) {
  json j;
  j["kind"] = s.kind();
  if (const auto* box = dynamic_cast<const BoxSet*>(&s)) {
    j["lo"] = box->lo();
    j["hi"] = box->hi();
  } else if (const auto* ball = dynamic_cast<const BallSet*>(&s)) {
    j["center"] = ball->center();
    j["radius"] = ball->radius();
  } else if (const auto* hs = dynamic_cast<const HalfspaceSet*>(&s)) {
    j["a"] = hs->normals();
    j["b"] = hs->offsets();
  }
  return j;
}

SetPtr set_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "whole_space") return std::make_shared<WholeSpace>();
  if (kind == "box")
    return std::make_shared<BoxSet>(j.at("lo").get<std::vector<double>>(),
                                    j.at("hi").get<std::vector<double>>());
  if (kind == "ball")
    return std::make_shared<BallSet>(j.at("center").get<std::vector<double>>(),
                                     j.at("radius").get<double>());
  if (kind == "halfspaces")
    return std::make_shared<HalfspaceSet>(
        j.at("a").get<std::vector<std::vector<double>>>(),
        j.at("b").get<std::vector<double>>());
  throw StructuralError("problem json: unknown set kind " + kind);
}

json constraint_to_json(const ConstraintComponent& c) {
  const auto* ring = dynamic_cast<const RingFn*>(c.fn.get());
  if (ring == nullptr)
    throw StructuralError("problem json: only ring constraints serialize");
  json j;
  j["kind"] = "ring";
  j["radius"] = std::sqrt(ring->r2());
  j["surrogate"] = c.surrogate == ConstraintSurrogateKind::kDescentLemma
                       ? "descent_lemma"
                       : "dc_split";
  j["curvature"] = c.curvature;
  return j;
}

ConstraintComponent constraint_from_json(const json& j) {
  if (j.at("kind").get<std::string>() != "ring")
    throw StructuralError("problem json: unknown constraint kind");
  const auto kind =
      j.at("surrogate").get<std::string>() == "descent_lemma"
          ? ConstraintSurrogateKind::kDescentLemma
          : ConstraintSurrogateKind::kDcSplit;
  auto c = make_ring_constraint(j.at("radius").get<double>(), kind);
  if (j.contains("curvature")) c.curvature = j.at("curvature").get<double>();
  return c;
}

}  // namespace

std::string problem_to_json_string(const ProblemSpec& spec) {
  spec.validate();
  json j;
  j["name"] = spec.name;
  j["n"] = spec.dim();
  j["block_sizes"] = spec.partition->sizes();
  j["smooth"] = smooth_to_json(spec);
  json regs = json::array();
  for (const auto& g : spec.regs) regs.push_back(reg_to_json(*g));
  j["regs"] = regs;
  json sets = json::array();
  for (const auto& s : spec.sets) sets.push_back(set_to_json(*s));
  j["sets"] = sets;
  if (spec.has_constraints()) {
    json cons = json::array();
    for (const auto& block : spec.constraints) {
      json bl = json::array();
      for (const auto& c : block) bl.push_back(constraint_to_json(c));
      cons.push_back(std::move(bl));
    }
    j["constraints"] = cons;
  }
  if (!spec.x0.empty()) j["x0"] = spec.x0;
  j["mfcq_assumed"] = spec.mfcq_assumed;
  return j.dump();
}

ProblemSpec problem_from_json_string(const std::string& text) {
  json j = json::parse(text);
  ProblemSpec spec;
  spec.name = j.value("name", "unnamed");
  auto sizes = j.at("block_sizes").get<std::vector<int>>();
  spec.partition = std::make_shared<BlockPartition>(std::move(sizes));
  if (j.at("n").get<int>() != spec.partition->dim())
    throw StructuralError("problem json: n does not match block sizes");
  spec.smooth = smooth_from_json(j.at("smooth"), spec.partition);

  const int N = spec.partition->count();
  auto broadcast = [N](const json& arr) {
    if (static_cast<int>(arr.size()) != 1 &&
        static_cast<int>(arr.size()) != N)
      throw StructuralError("problem json: per-block list length mismatch");
    return static_cast<int>(arr.size()) == 1;
  };
  {
    const auto& arr = j.at("regs");
    const bool one = broadcast(arr);
    for (int b = 0; b < N; ++b)
      spec.regs.push_back(reg_from_json(arr.at(one ? 0 : b)));
  }
  {
    const auto& arr = j.at("sets");
    const bool one = broadcast(arr);
    for (int b = 0; b < N; ++b)
      spec.sets.push_back(set_from_json(arr.at(one ? 0 : b)));
  }
  if (j.contains("constraints")) {
    const auto& arr = j.at("constraints");
    if (static_cast<int>(arr.size()) != N)
      throw StructuralError("problem json: constraints length mismatch");
    spec.constraints.resize(N);
    for (int b = 0; b < N; ++b)
      for (const auto& cj : arr.at(b))
        spec.constraints[b].push_back(constraint_from_json(cj));
  }
  if (j.contains("x0")) spec.x0 = j.at("x0").get<std::vector<double>>();
  spec.mfcq_assumed = j.value("mfcq_assumed", true);
  spec.validate();
  return spec;
}

void write_problem_json(const std::string& path, const ProblemSpec& spec) {
  std::ofstream out(path);
  if (!out) throw StructuralError("cannot open " + path);
  out << problem_to_json_string(spec) << "\n";
}

ProblemSpec read_problem_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return problem_from_json_string(text);
}

}  // namespace asyflexa
