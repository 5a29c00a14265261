#include "dissect/topology.hpp"

#include "dissect/errors.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <numeric>
#include <set>

namespace dissect {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);  // keeps vertex 0 (ground) as its own root
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

// Endpoints of an incidence column in vertex numbering where 0 is ground
// (or the supervertex holding ground) and k >= 1 is row k-1.
std::pair<std::size_t, std::size_t> endpoints(const Matrix& a, Index col) {
  std::size_t from = 0, to = 0;
  for (Index r = 0; r < a.rows(); ++r) {
    if (a(r, col) > 0.5) from = static_cast<std::size_t>(r) + 1;
    if (a(r, col) < -0.5) to = static_cast<std::size_t>(r) + 1;
  }
  return {from, to};
}

// Indicator kernel of the transposed incidence `a` (vertices = rows + ground):
// one column per connected component that does not contain ground.
Matrix component_kernel(const Matrix& a) {
  const std::size_t vertices = static_cast<std::size_t>(a.rows()) + 1;
  DisjointSets sets(vertices);
  for (Index c = 0; c < a.cols(); ++c) {
    const auto [u, v] = endpoints(a, c);
    sets.unite(u, v);
  }
  std::map<std::size_t, Index> column;
  for (std::size_t v = 1; v < vertices; ++v) {
    const auto root = sets.find(v);
    if (root != sets.find(0)) column.try_emplace(root, static_cast<Index>(column.size()));
  }
  Matrix q = Matrix::Zero(a.rows(), static_cast<Index>(column.size()));
  for (std::size_t v = 1; v < vertices; ++v) {
    auto it = column.find(sets.find(v));
    if (it != column.end()) q(static_cast<Index>(v) - 1, it->second) = 1.0;
  }
  return q;
}

// Fundamental cycles of the graph whose reduced incidence is `a`; columns
// span ker a.
Matrix cycle_kernel(const Matrix& a) {
  const std::size_t vertices = static_cast<std::size_t>(a.rows()) + 1;
  DisjointSets sets(vertices);
  std::vector<std::vector<std::pair<std::size_t, Index>>> tree(vertices);
  std::vector<Index> chords;
  for (Index c = 0; c < a.cols(); ++c) {
    const auto [u, v] = endpoints(a, c);
    if (sets.unite(u, v)) {
      tree[u].push_back({v, c});
      tree[v].push_back({u, c});
    } else {
      chords.push_back(c);
    }
  }
  Matrix w = Matrix::Zero(a.cols(), static_cast<Index>(chords.size()));
  for (std::size_t k = 0; k < chords.size(); ++k) {
    const Index chord = chords[k];
    const auto [from, to] = endpoints(a, chord);
    w(chord, static_cast<Index>(k)) = 1.0;
    // Walk the tree from `to` back to `from`.
    std::vector<std::pair<std::size_t, Index>> prev(vertices, {vertices, -1});
    std::deque<std::size_t> queue{to};
    prev[to] = {to, -1};
    while (!queue.empty()) {
      const auto u = queue.front();
      queue.pop_front();
      if (u == from) break;
      for (const auto& [v, edge] : tree[u]) {
        if (prev[v].first == vertices) {
          prev[v] = {u, edge};
          queue.push_back(v);
        }
      }
    }
    for (std::size_t v = from; v != to; v = prev[v].first) {
      const auto [u, edge] = prev[v];
      const auto [ef, et] = endpoints(a, edge);
      // Traversed u -> v.
      w(edge, static_cast<Index>(k)) = (ef == u && et == v) ? 1.0 : -1.0;
    }
  }
  return w;
}

Matrix blkdiag(const Matrix& a, const Matrix& b) {
  Matrix m = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  m.topLeftCorner(a.rows(), a.cols()) = a;
  m.bottomRightCorner(b.rows(), b.cols()) = b;
  return m;
}

Basis canonical(const Matrix& kernel, Index n) {
  if (kernel.cols() == 0) return {Matrix::Zero(n, 0), Matrix::Identity(n, n), BasisConstruction::TopologicalSelection};
  bool ok = false;
  Basis b = selection_from_span(kernel, 1e-12, ok);
  if (!ok) {
    // Orthonormalize the integer span instead.
    Basis orth = nullspace_basis(kernel.transpose(), 1e-12);
    Basis out;
    Eigen::HouseholderQR<Matrix> qr(kernel);
    out.kernel = (qr.householderQ() * Matrix::Identity(n, kernel.cols()));
    out.complement = orth.kernel;
    out.construction = BasisConstruction::TopologicalSelection;
    return out;
  }
  b.construction = BasisConstruction::TopologicalSelection;
  return b;
}

}  // namespace

TopologicalBases topological_bases(const IncidenceSet& inc) {
  TopologicalBases t;
  const Index np = inc.nodes();
  const Index nl = inc.inductive.cols();
  const Index nv = inc.vsource.cols();

  t.q_c = component_kernel(inc.capacitive);
  const Basis c = canonical(t.q_c, np);
  t.q_c = c.kernel;
  t.p_c = c.complement;

  // Contract capacitor components: vertices are the columns of q_c.
  const Matrix v_contracted = t.q_c.transpose() * inc.vsource;  // supervertices x V branches
  t.q_v = canonical(component_kernel(v_contracted), t.q_c.cols()).kernel;
  const Matrix r_contracted = t.q_v.transpose() * t.q_c.transpose() * inc.resistive;
  t.q_r = canonical(component_kernel(r_contracted), t.q_v.cols()).kernel;
  t.w_v = canonical(cycle_kernel(v_contracted), nv).kernel;

  t.first.kernel = blkdiag(t.q_c, blkdiag(Matrix::Zero(nl, 0), Matrix::Identity(nv, nv)));
  t.first.complement = blkdiag(t.p_c, blkdiag(Matrix::Identity(nl, nl), Matrix::Zero(nv, 0)));
  t.first.construction = BasisConstruction::TopologicalSelection;

  const Matrix qbar = blkdiag(t.q_v * t.q_r, t.w_v);
  t.second = canonical(qbar, qbar.rows());

  // Kernel identities on the incidence products.
  const double tol = 1e-12;
  const bool ok = kernel_residual(inc.capacitive.transpose(), t.q_c) <= tol &&
                  kernel_residual(inc.vsource.transpose() * t.q_c, t.q_v) <= tol &&
                  kernel_residual(inc.resistive.transpose() * t.q_c * t.q_v, t.q_r) <= tol &&
                  kernel_residual(t.q_c.transpose() * inc.vsource, t.w_v) <= tol;
  if (!ok) {
    t.fallback = true;
    t.note = "topological candidate failed its kernel identity";
  }
  return t;
}

namespace {

struct Edge {
  std::size_t from;
  std::size_t to;
  std::string name;
};

std::vector<Edge> edges_of(const CircuitGraph& g, const std::set<DeviceKind>& kinds) {
  std::vector<Edge> out;
  for (const auto& b : g.branches) {
    if (!kinds.count(b.device.kind)) continue;
    if (b.device.kind == DeviceKind::InductiveMultiport) {
      out.push_back({b.terminals[0], b.terminals[1], b.name + "a"});
      out.push_back({b.terminals[2], b.terminals[3], b.name + "b"});
    } else {
      out.push_back({b.terminals[0], b.terminals[1], b.name});
    }
  }
  return out;
}

// Branch names on a path between two vertices avoiding edge `skip`, empty if none.
std::vector<std::string> find_path(const std::vector<Edge>& edges, std::size_t vertices, std::size_t skip,
                                   std::size_t from, std::size_t to) {
  std::vector<std::pair<std::size_t, std::size_t>> prev(vertices, {vertices, 0});
  prev[from] = {from, 0};
  std::deque<std::size_t> queue{from};
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    if (u == to) break;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (e == skip) continue;
      std::size_t v = vertices;
      if (edges[e].from == u) v = edges[e].to;
      if (edges[e].to == u) v = edges[e].from;
      if (v == vertices || prev[v].first != vertices) continue;
      prev[v] = {u, e};
      queue.push_back(v);
    }
  }
  std::vector<std::string> path;
  if (prev[to].first == vertices) return path;
  for (std::size_t v = to; v != from; v = prev[v].first) path.push_back(edges[prev[v].second].name);
  return path;
}

}  // namespace

IndexReport detect_index_topological(const CircuitGraph& graph) {
  IndexReport r;
  const std::size_t vertices = graph.nodes.size();

  const auto cv = edges_of(graph, {DeviceKind::Capacitor, DeviceKind::VoltageSource});
  std::set<std::vector<std::string>> seen_loops;
  for (std::size_t e = 0; e < cv.size(); ++e) {
    const auto& b = graph.branches;
    const bool is_source = std::any_of(b.begin(), b.end(), [&](const Branch& br) {
      return br.name == cv[e].name && br.device.kind == DeviceKind::VoltageSource;
    });
    if (!is_source) continue;
    if (cv[e].from == cv[e].to) {
      seen_loops.insert({cv[e].name});
      continue;
    }
    auto path = find_path(cv, vertices, e, cv[e].from, cv[e].to);
    if (path.empty()) continue;
    path.push_back(cv[e].name);
    std::sort(path.begin(), path.end());
    seen_loops.insert(path);
  }
  r.cv_loops.assign(seen_loops.begin(), seen_loops.end());

  // Components of the graph without inductors and current sources.
  const auto rest = edges_of(graph, {DeviceKind::Capacitor, DeviceKind::VoltageSource, DeviceKind::Resistor,
                                     DeviceKind::Diode});
  DisjointSets sets(vertices);
  for (const auto& e : rest) sets.unite(e.from, e.to);
  const auto li = edges_of(graph, {DeviceKind::Inductor, DeviceKind::InductiveMultiport, DeviceKind::CurrentSource});
  std::map<std::size_t, std::vector<std::string>> crossing;
  for (const auto& e : li) {
    const auto a = sets.find(e.from);
    const auto b = sets.find(e.to);
    if (a == b) continue;
    if (a != sets.find(0)) crossing[a].push_back(e.name);
    if (b != sets.find(0)) crossing[b].push_back(e.name);
  }
  for (auto& [root, names] : crossing) {
    std::sort(names.begin(), names.end());
    r.li_cutsets.push_back(names);
  }
  r.topological_index = (r.cv_loops.empty() && r.li_cutsets.empty()) ? 1 : 2;
  return r;
}

}  // namespace dissect
