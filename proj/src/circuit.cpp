#include "qco/circuit.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace qco {

namespace {

BlockTensor two_site_identity(const IndexSpace& s1, const IndexSpace& s2) {
  IndexSpace o1 = s1, o2 = s2, i1 = s1, i2 = s2;
  o1.dir = o2.dir = Direction::Out;
  i1.dir = i2.dir = Direction::In;
  BlockTensor id({o1, o2, i1, i2});
  for (const auto& a : s1.sectors)
    for (const auto& b : s2.sectors) {
      auto& blk = id.block({a.charge, b.charge, a.charge, b.charge});
      const std::int64_t d1 = a.dim, d2 = b.dim;
      for (std::int64_t i = 0; i < d1; ++i)
        for (std::int64_t j = 0; j < d2; ++j)
          blk.data[static_cast<std::size_t>(((i * d2 + j) * d1 + i) * d2 + j)] = 1.0;
    }
  return id;
}

BlockTensor materialize(const Circuit& circuit, const Placement& p) {
  const BlockTensor& g = circuit.params.at(p.param);
  return p.mirrored ? mirror_transform(g) : g;
}

// Placements for one new layer, honoring mirror sharing. Appends the ids of
// freshly minted parameters (with a self-mirror flag) to new_params.
Circuit::Layer build_layer(Circuit& circuit, std::vector<std::pair<int, bool>>& new_params) {
  Circuit::Layer layer;
  std::map<int, int> assigned;  // bond -> param id, across both sublayers
  auto place = [&](int bond) {
    Placement p;
    p.bond = bond;
    const int m = circuit.length - 2 - bond;
    if (circuit.inversion_symmetric && assigned.count(m)) {
      p.param = assigned.at(m);
      p.mirrored = true;
    } else {
      p.param = circuit.next_param++;
      assigned[bond] = p.param;
      new_params.emplace_back(p.param, circuit.inversion_symmetric && m == bond);
    }
    return p;
  };
  for (int b = 0; b + 1 < circuit.length; b += 2) layer.odd.push_back(place(b));
  for (int b = 1; b + 1 < circuit.length; b += 2) layer.even.push_back(place(b));
  return layer;
}

}  // namespace

Circuit make_circuit(int length, const IndexSpace& phys, bool inversion_symmetric) {
  if (length < 2) throw std::invalid_argument("make_circuit: need at least two sites");
  Circuit c;
  c.length = length;
  c.phys = phys;
  c.phys.dir = Direction::Out;
  c.inversion_symmetric = inversion_symmetric;
  return c;
}

void grow(Circuit& circuit, double eps, std::mt19937_64& rng) {
  std::vector<std::pair<int, bool>> new_params;
  Circuit::Layer layer = build_layer(circuit, new_params);
  for (const auto& [id, self_mirror] : new_params)
    circuit.params.emplace(id, random_unitary(circuit.phys, circuit.phys, eps, rng, self_mirror));
  circuit.layers.push_back(std::move(layer));
}

BlockTensor mirror_transform(const BlockTensor& gate) { return permuted(gate, {1, 0, 3, 2}); }

double unitarity_error(const BlockTensor& gate) {
  BlockTensor m = contract(conj(gate), gate, {{0, 0}, {1, 1}});
  return (m - two_site_identity(gate.space(2).flipped(), gate.space(3).flipped())).norm();
}

TebdStepResult tebd_step(const BlockTensor& a1, const BlockTensor& /*c1*/, const BlockTensor& a2,
                         const BlockTensor& c2, const BlockTensor& gate,
                         const TruncationPolicy& policy) {
  BlockTensor pair = contract(a1, a2, {{2, 0}});  // (l, s1, s2, r)
  BlockTensor phi = permuted(contract(gate, pair, {{2, 1}, {3, 2}}), {2, 0, 1, 3});
  BlockTensor theta = contract(phi, c2, {{3, 0}});
  SvdResult r = svd_truncated(theta, 2, policy);
  TebdStepResult out;
  out.a1 = r.u;
  out.c1 = diag_tensor(r.s);
  // projecting the gated block (without c2) onto the new bond keeps the
  // update free of any bond-matrix inverse
  out.a2 = contract(conj(r.u), phi, {{0, 0}, {1, 1}});
  out.c2 = c2;
  out.discarded = r.discarded_weight;
  return out;
}

ApplyResult apply_circuit(const MpsState& in, const Circuit& circuit,
                          const TruncationPolicy& policy) {
  if (in.length() != circuit.length)
    throw std::invalid_argument("apply_circuit: state/circuit length mismatch");
  ApplyResult res;
  res.state = in;
  auto& st = res.state;
  auto run = [&](const std::vector<Placement>& sublayer) {
    for (const auto& p : sublayer) {
      const auto b = static_cast<std::size_t>(p.bond);
      TebdStepResult r = tebd_step(st.a[b], st.c[b + 1], st.a[b + 1], st.c[b + 2],
                                   materialize(circuit, p), policy);
      st.a[b] = std::move(r.a1);
      st.c[b + 1] = std::move(r.c1);
      st.a[b + 1] = std::move(r.a2);
      res.per_step.push_back(r.discarded);
      res.total_discarded += r.discarded;
    }
  };
  for (const auto& layer : circuit.layers) {
    run(layer.odd);
    run(layer.even);
  }
  return res;
}

TapeMps mps_to_tape(ad::Tape& tape, const MpsState& state) {
  TapeMps out;
  for (const auto& a : state.a) out.a.push_back(tape.leaf(a));
  for (const auto& c : state.c) out.c.push_back(tape.leaf(c));
  return out;
}

MpsState tape_to_mps(const ad::Tape& tape, const TapeMps& nodes) {
  MpsState st;
  for (auto id : nodes.a) st.a.push_back(tape.tensor(id));
  for (auto id : nodes.c) st.c.push_back(tape.tensor(id));
  return st;
}

TapeMps apply_circuit(ad::Tape& tape, const TapeMps& in, const Circuit& circuit,
                      const std::map<int, ad::NodeId>& param_nodes,
                      const TruncationPolicy& policy, double* total_discarded) {
  if (static_cast<int>(in.a.size()) != circuit.length || in.c.size() != in.a.size() + 1)
    throw std::invalid_argument("apply_circuit: state/circuit length mismatch");
  TapeMps st = in;
  double dw_total = 0.0;
  auto run = [&](const std::vector<Placement>& sublayer) {
    for (const auto& p : sublayer) {
      const auto b = static_cast<std::size_t>(p.bond);
      const bool mirrored = p.mirrored;
      double dw = 0.0;
      auto out = tape.fused(
          {st.a[b], st.a[b + 1], st.c[b + 2], param_nodes.at(p.param)},
          [&](ad::Tape& t, const std::vector<ad::NodeId>& ids) {
            ad::NodeId g = mirrored ? t.permute(ids[3], {1, 0, 3, 2}) : ids[3];
            ad::NodeId pair = t.contract(ids[0], ids[1], {{2, 0}});
            ad::NodeId phi = t.permute(t.contract(g, pair, {{2, 1}, {3, 2}}), {2, 0, 1, 3});
            ad::NodeId theta = t.contract(phi, ids[2], {{3, 0}});
            auto s = t.svd(theta, 2, policy);
            dw = s.discarded_weight;
            ad::NodeId na2 = t.contract(t.conjugate(s.u), phi, {{0, 0}, {1, 1}});
            return std::vector<ad::NodeId>{s.u, t.diag(s.s), na2};
          });
      st.a[b] = out[0];
      st.c[b + 1] = out[1];
      st.a[b + 1] = out[2];
      dw_total += dw;
    }
  };
  for (const auto& layer : circuit.layers) {
    run(layer.odd);
    run(layer.even);
  }
  if (total_discarded) *total_discarded = dw_total;
  return st;
}

nlohmann::json circuit_to_json(const Circuit& circuit) {
  nlohmann::json j;
  j["format"] = "ckt1";
  j["length"] = circuit.length;
  j["phys"] = space_to_json(circuit.phys);
  j["inversion"] = circuit.inversion_symmetric;
  j["next_param"] = circuit.next_param;
  auto place_json = [](const Placement& p) {
    return nlohmann::json{{"bond", p.bond}, {"param", p.param}, {"mirrored", p.mirrored}};
  };
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& layer : circuit.layers) {
    nlohmann::json lj;
    auto& odd = lj["odd"] = nlohmann::json::array();
    for (const auto& p : layer.odd) odd.push_back(place_json(p));
    auto& even = lj["even"] = nlohmann::json::array();
    for (const auto& p : layer.even) even.push_back(place_json(p));
    layers.push_back(std::move(lj));
  }
  auto& params = j["params"] = nlohmann::json::array();
  for (const auto& [id, g] : circuit.params)
    params.push_back({{"id", id}, {"tensor", tensor_to_json(g)}});
  return j;
}

Circuit circuit_from_json(const nlohmann::json& j) {
  if (j.at("format") != "ckt1")
    throw std::invalid_argument("circuit_from_json: unsupported format tag");
  Circuit c;
  c.length = j.at("length").get<int>();
  c.phys = space_from_json(j.at("phys"));
  c.inversion_symmetric = j.at("inversion").get<bool>();
  c.next_param = j.at("next_param").get<int>();
  auto read_place = [](const nlohmann::json& pj) {
    Placement p;
    p.bond = pj.at("bond").get<int>();
    p.param = pj.at("param").get<int>();
    p.mirrored = pj.at("mirrored").get<bool>();
    return p;
  };
  for (const auto& lj : j.at("layers")) {
    Circuit::Layer layer;
    for (const auto& pj : lj.at("odd")) layer.odd.push_back(read_place(pj));
    for (const auto& pj : lj.at("even")) layer.even.push_back(read_place(pj));
    c.layers.push_back(std::move(layer));
  }
  for (const auto& pj : j.at("params"))
    c.params.emplace(pj.at("id").get<int>(), tensor_from_json(pj.at("tensor")));
  for (const auto& layer : c.layers)
    for (const auto* sub : {&layer.odd, &layer.even})
      for (const auto& p : *sub)
        if (!c.params.count(p.param))
          throw std::invalid_argument("circuit_from_json: placement references a missing parameter");
  return c;
}

}  // namespace qco
