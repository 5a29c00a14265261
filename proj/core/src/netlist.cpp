#include "dissect/netlist.hpp"

#include "dissect/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace dissect {

std::string to_string(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::Resistor:
      return "resistor";
    case DeviceKind::Diode:
      return "diode";
    case DeviceKind::Capacitor:
      return "capacitor";
    case DeviceKind::Inductor:
      return "inductor";
    case DeviceKind::InductiveMultiport:
      return "inductive-multiport";
    case DeviceKind::VoltageSource:
      return "vsource";
    case DeviceKind::CurrentSource:
      return "isource";
  }
  return "unknown";
}

double DeviceModel::get(const std::string& key, const Vector& p) const {
  if (auto it = bindings.find(key); it != bindings.end()) {
    if (static_cast<Index>(it->second) >= p.size()) {
      throw DimensionMismatch("parameter vector has " + std::to_string(p.size()) +
                              " entries, binding for " + key + " needs index " + std::to_string(it->second));
    }
    return p(static_cast<Index>(it->second));
  }
  return params.at(key);
}

std::optional<std::size_t> CircuitGraph::parameter_index(std::string_view name) const {
  for (std::size_t i = 0; i < parameter_space.size(); ++i) {
    if (parameter_space[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> CircuitGraph::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& r : parameter_space) names.push_back(r.name);
  return names;
}

Vector CircuitGraph::nominal_parameters() const {
  Vector p(static_cast<Index>(parameter_space.size()));
  for (std::size_t i = 0; i < parameter_space.size(); ++i) {
    p(static_cast<Index>(i)) = 0.5 * (parameter_space[i].lower + parameter_space[i].upper);
  }
  return p;
}

std::size_t CircuitGraph::count(DeviceKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(branches.begin(), branches.end(), [kind](const Branch& b) { return b.device.kind == kind; }));
}

namespace {

struct Token {
  std::string text;
  std::size_t column;
};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
  return out;
}

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '(' || c == ')') {
      tokens.push_back({std::string(1, c), i + 1});
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && line[i] != '(' &&
           line[i] != ')') {
      ++i;
    }
    tokens.push_back({std::string(line.substr(start, i - start)), start + 1});
  }
  return tokens;
}

std::optional<double> to_number(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct RawParam {
  std::string name;
  double lower;
  double upper;
  std::size_t line;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  CircuitGraph run() {
    split_lines();
    collect_parameters();
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      line_no_ = i + 1;
      const auto& toks = lines_[i];
      if (toks.empty()) continue;
      const std::string head = upper(toks[0].text);
      if (head == "PARAM") continue;
      if (head == ".END") break;
      parse_element(toks);
    }
    return finish();
  }

 private:
  void split_lines() {
    std::size_t pos = 0;
    while (pos <= text_.size()) {
      std::size_t end = text_.find('\n', pos);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(pos, end - pos);
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines_.push_back(tokenize(line));
      pos = end + 1;
    }
  }

  [[noreturn]] void fail(const Token& tok, const std::string& msg) const { throw ParseError(line_no_, tok.column, msg); }
  [[noreturn]] void fail_eol(const std::vector<Token>& toks, const std::string& msg) const {
    const std::size_t col = toks.empty() ? 1 : toks.back().column + toks.back().text.size();
    throw ParseError(line_no_, col, msg);
  }

  double number(const Token& tok) const {
    auto v = to_number(tok.text);
    if (!v) fail(tok, "expected a number, got '" + tok.text + "'");
    return *v;
  }

  void collect_parameters() {
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      line_no_ = i + 1;
      const auto& toks = lines_[i];
      if (toks.empty() || upper(toks[0].text) != "PARAM") continue;
      if (toks.size() != 4) fail_eol(toks, "PARAM expects: PARAM <NAME> <lower> <upper>");
      RawParam p{toks[1].text, number(toks[2]), number(toks[3]), line_no_};
      if (p.lower > p.upper) fail(toks[2], "parameter " + p.name + " has lower bound above upper bound");
      for (const auto& q : params_) {
        if (q.name == p.name) fail(toks[1], "duplicate parameter " + p.name);
      }
      params_.push_back(p);
    }
  }

  std::optional<std::size_t> param_index(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t node(const Token& tok) {
    auto it = std::find(node_order_.begin(), node_order_.end(), tok.text);
    if (it == node_order_.end()) {
      node_order_.push_back(tok.text);
      return node_order_.size() - 1;
    }
    return static_cast<std::size_t>(it - node_order_.begin());
  }

  // Parses KEY=VALUE where VALUE is a number or a declared parameter name.
  void key_value(const Token& tok, DeviceModel& dev) {
    const auto eq = tok.text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == tok.text.size()) fail(tok, "expected KEY=VALUE");
    const std::string key = upper(tok.text.substr(0, eq));
    const std::string value = tok.text.substr(eq + 1);
    if (auto v = to_number(value)) {
      dev.params[key] = *v;
      return;
    }
    auto idx = param_index(value);
    if (!idx) fail(tok, "unknown parameter '" + value + "'");
    dev.bindings[key] = *idx;
  }

  void value_or_binding(const Token& tok, const std::string& key, DeviceModel& dev) {
    if (auto v = to_number(tok.text)) {
      dev.params[key] = *v;
      return;
    }
    const auto eq = tok.text.find('=');
    if (eq == std::string::npos || upper(tok.text.substr(0, eq)) != "PARAM") {
      fail(tok, "expected a value or param=NAME, got '" + tok.text + "'");
    }
    const std::string name = tok.text.substr(eq + 1);
    auto idx = param_index(name);
    if (!idx) fail(tok, "unknown parameter '" + name + "'");
    dev.bindings[key] = *idx;
  }

  Waveform waveform(const std::vector<Token>& toks, std::size_t first) const {
    if (first >= toks.size()) fail_eol(toks, "missing source value");
    const std::string kw = upper(toks[first].text);
    if (kw == "DC") {
      if (toks.size() != first + 2) fail_eol(toks, "DC expects exactly one value");
      return Waveform::constant(number(toks[first + 1]));
    }
    if (kw == "SIN" || kw == "COS") {
      if (first + 1 >= toks.size() || toks[first + 1].text != "(") fail_eol(toks, "expected '(' after " + kw);
      std::vector<double> args;
      std::size_t i = first + 2;
      for (; i < toks.size() && toks[i].text != ")"; ++i) args.push_back(number(toks[i]));
      if (i >= toks.size()) fail_eol(toks, "missing ')'");
      if (i + 1 != toks.size()) fail(toks[i + 1], "unexpected token after ')'");
      if (args.size() < 3 || args.size() > 4) fail(toks[first], kw + " expects (offset amplitude frequency [phase])");
      if (args[2] < 0.0) fail(toks[first], "frequency must be nonnegative");
      const double phase = args.size() == 4 ? args[3] : 0.0;
      return kw == "SIN" ? Waveform::sine(args[0], args[1], args[2], phase)
                         : Waveform::cosine(args[0], args[1], args[2], phase);
    }
    if (toks.size() == first + 1) return Waveform::constant(number(toks[first]));
    fail(toks[first], "expected SIN(...), COS(...) or DC <value>");
  }

  void parse_element(const std::vector<Token>& toks) {
    const std::string name = upper(toks[0].text);
    const char letter = name[0];
    Branch br;
    br.name = name;
    DeviceModel& dev = br.device;

    auto two_terminal = [&](std::size_t min_tokens) {
      if (toks.size() < min_tokens) fail_eol(toks, "too few fields for " + name);
      br.terminals = {node(toks[1]), node(toks[2])};
    };

    switch (letter) {
      case 'R':
      case 'C':
      case 'L': {
        two_terminal(4);
        if (toks.size() != 4) fail(toks[4], "unexpected token");
        dev.kind = letter == 'R' ? DeviceKind::Resistor : letter == 'C' ? DeviceKind::Capacitor : DeviceKind::Inductor;
        value_or_binding(toks[3], std::string(1, letter), dev);
        break;
      }
      case 'D': {
        two_terminal(3);
        dev.kind = DeviceKind::Diode;
        for (std::size_t i = 3; i < toks.size(); ++i) key_value(toks[i], dev);
        for (const auto& [k, v] : dev.params) {
          (void)v;
          if (k != "IS" && k != "VT" && k != "TEMP" && k != "T0" && k != "EG") fail(toks[0], "unknown diode key " + k);
        }
        for (const auto& [k, v] : dev.bindings) {
          (void)v;
          if (k != "TEMP") fail(toks[0], "only TEMP may be bound to a parameter on a diode");
        }
        dev.params.try_emplace("IS", 1e-14);
        if (dev.has("TEMP")) {
          dev.params.erase("VT");
          dev.params.try_emplace("T0", 300.0);
          dev.params.try_emplace("EG", 1.12);
        } else {
          dev.params.try_emplace("VT", 0.026);
        }
        break;
      }
      case 'V':
      case 'I': {
        two_terminal(4);
        dev.kind = letter == 'V' ? DeviceKind::VoltageSource : DeviceKind::CurrentSource;
        dev.waveform = waveform(toks, 3);
        break;
      }
      case 'K': {
        if (toks.size() < 5) fail_eol(toks, "K expects four terminals");
        br.terminals = {node(toks[1]), node(toks[2]), node(toks[3]), node(toks[4])};
        dev.kind = DeviceKind::InductiveMultiport;
        for (std::size_t i = 5; i < toks.size(); ++i) key_value(toks[i], dev);
        for (const auto& [k, v] : dev.params) {
          (void)v;
          if (k != "L0" && k != "A2" && k != "A4" && k != "RATIO2" && k != "COUP2") {
            fail(toks[0], "unknown transformer key " + k);
          }
        }
        if (!dev.bindings.empty()) fail(toks[0], "transformer coefficients cannot be bound to parameters");
        dev.params.try_emplace("L0", 1e-3);
        dev.params.try_emplace("A2", -10.0);
        dev.params.try_emplace("A4", 50.0);
        dev.params.try_emplace("RATIO2", 0.1);
        dev.params.try_emplace("COUP2", 0.09);
        break;
      }
      case 'E':
      case 'F':
      case 'G':
      case 'H':
        throw ValidationError("unsupported-device",
                              "line " + std::to_string(line_no_) + ": controlled source " + name + " is not supported");
      case 'X':
        throw ValidationError("unsupported-device",
                              "line " + std::to_string(line_no_) + ": subcircuit instance " + name + " is not supported");
      default:
        if (letter == '.') {
          throw ValidationError("unsupported-device",
                                "line " + std::to_string(line_no_) + ": directive " + name + " is not supported");
        }
        throw ValidationError("unknown-device",
                              "line " + std::to_string(line_no_) + ": unknown device kind '" + toks[0].text + "'");
    }

    for (const auto& b : branches_) {
      if (b.name == br.name) {
        throw ValidationError("duplicate-branch", "line " + std::to_string(line_no_) + ": duplicate branch name " + name);
      }
    }
    branches_.push_back(std::move(br));
  }

  CircuitGraph finish() {
    // Ground first, then numeric node names ascending, then the rest by first use.
    auto is_numeric = [](const std::string& s) {
      return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
    };
    std::vector<std::size_t> order(node_order_.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& na = node_order_[a];
      const auto& nb = node_order_[b];
      if ((na == "0") != (nb == "0")) return na == "0";
      const bool da = is_numeric(na), db = is_numeric(nb);
      if (da != db) return da;
      if (da && db) {
        if (na.size() != nb.size()) return na.size() < nb.size();
        return na < nb;
      }
      return false;
    });

    CircuitGraph g;
    std::vector<std::size_t> remap(node_order_.size());
    if (std::find(node_order_.begin(), node_order_.end(), "0") == node_order_.end()) {
      throw ValidationError("missing-ground", "netlist has no ground node \"0\"");
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      remap[order[i]] = i;
      g.nodes.push_back(node_order_[order[i]]);
    }
    for (auto& b : branches_) {
      for (auto& t : b.terminals) t = remap[t];
    }
    g.branches = std::move(branches_);
    for (const auto& p : params_) g.parameter_space.push_back({p.name, p.lower, p.upper});
    validate(g);
    return g;
  }

  std::string_view text_;
  std::vector<std::vector<Token>> lines_;
  std::size_t line_no_ = 0;
  std::vector<RawParam> params_;
  std::vector<std::string> node_order_;
  std::vector<Branch> branches_;
};

void require_positive(const Branch& b, const std::string& key, const CircuitGraph& g) {
  const auto& dev = b.device;
  if (auto it = dev.bindings.find(key); it != dev.bindings.end()) {
    const auto& range = g.parameter_space.at(it->second);
    if (!(range.lower > 0.0)) {
      throw ValidationError("nonpositive-value",
                            b.name + ": parameter " + range.name + " bound to " + key + " must have a positive range");
    }
    return;
  }
  auto it = dev.params.find(key);
  if (it == dev.params.end()) throw ValidationError("missing-value", b.name + ": missing " + key);
  if (!(it->second > 0.0)) throw ValidationError("nonpositive-value", b.name + ": " + key + " must be positive");
}

}  // namespace

void validate(const CircuitGraph& g) {
  if (g.nodes.empty() || g.nodes.front() != "0") {
    throw ValidationError("missing-ground", "circuit has no ground node \"0\"");
  }
  const std::size_t n = g.nodes.size();
  std::vector<std::size_t> degree(n, 0);
  std::set<std::string> names;
  for (const auto& b : g.branches) {
    if (!names.insert(b.name).second) throw ValidationError("duplicate-branch", "duplicate branch name " + b.name);
    const std::size_t expected = b.device.kind == DeviceKind::InductiveMultiport ? 4 : 2;
    if (b.terminals.size() != expected) {
      throw ValidationError("dangling-node", b.name + ": wrong number of terminals");
    }
    for (auto t : b.terminals) {
      if (t >= n) throw ValidationError("dangling-node", b.name + ": terminal refers to a nonexistent node");
      ++degree[t];
    }
    for (const auto& [key, idx] : b.device.bindings) {
      if (idx >= g.parameter_space.size()) {
        throw ValidationError("unknown-parameter", b.name + ": binding for " + key + " refers to a missing parameter");
      }
    }
    switch (b.device.kind) {
      case DeviceKind::Resistor:
        require_positive(b, "R", g);
        break;
      case DeviceKind::Capacitor:
        require_positive(b, "C", g);
        break;
      case DeviceKind::Inductor:
        require_positive(b, "L", g);
        break;
      case DeviceKind::Diode:
        require_positive(b, "IS", g);
        if (b.device.thermal()) {
          require_positive(b, "T0", g);
          require_positive(b, "EG", g);
        } else {
          require_positive(b, "VT", g);
        }
        break;
      case DeviceKind::InductiveMultiport: {
        require_positive(b, "L0", g);
        require_positive(b, "RATIO2", g);
        const double coup = b.device.params.at("COUP2");
        if (coup < 0.0 || coup >= b.device.params.at("RATIO2")) {
          throw ValidationError("invalid-value", b.name + ": COUP2 must lie in [0, RATIO2) for a positive definite L");
        }
        break;
      }
      case DeviceKind::VoltageSource:
      case DeviceKind::CurrentSource:
        break;
    }
  }
  for (const auto& r : g.parameter_space) {
    if (!std::isfinite(r.lower) || !std::isfinite(r.upper) || r.lower > r.upper) {
      throw ValidationError("invalid-value", "parameter " + r.name + " has an invalid range");
    }
  }
  // A single two-terminal element is allowed to hang between one node and
  // ground; otherwise a node touched by one terminal only is dangling.
  if (g.branches.size() > 1) {
    for (std::size_t i = 1; i < n; ++i) {
      if (degree[i] == 1) {
        throw ValidationError("dangling-node", "node " + g.nodes[i] + " is connected to only one branch terminal");
      }
    }
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (degree[i] == 0) throw ValidationError("dangling-node", "node " + g.nodes[i] + " is not connected");
  }

  // Connectivity through any branch (two-port windings count as edges).
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& b : g.branches) {
    for (std::size_t k = 0; k + 1 < b.terminals.size(); k += 2) {
      parent[find(b.terminals[k])] = find(b.terminals[k + 1]);
    }
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (find(i) != find(0)) {
      throw ValidationError("disconnected", "node " + g.nodes[i] + " has no path to ground");
    }
  }
}

CircuitGraph parse_netlist(std::string_view text) { return Parser(text).run(); }

CircuitGraph load_netlist_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("file-not-found", "cannot open netlist file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_netlist(ss.str());
}

namespace {

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_key(const CircuitGraph& g, const DeviceModel& dev, const std::string& key) {
  if (auto it = dev.bindings.find(key); it != dev.bindings.end()) return g.parameter_space.at(it->second).name;
  return fmt_num(dev.params.at(key));
}

}  // namespace

std::string to_netlist(const CircuitGraph& g) {
  std::ostringstream out;
  for (const auto& r : g.parameter_space) {
    out << "PARAM " << r.name << ' ' << fmt_num(r.lower) << ' ' << fmt_num(r.upper) << '\n';
  }
  for (const auto& b : g.branches) {
    out << b.name;
    for (auto t : b.terminals) out << ' ' << g.nodes.at(t);
    const auto& dev = b.device;
    switch (dev.kind) {
      case DeviceKind::Resistor:
      case DeviceKind::Capacitor:
      case DeviceKind::Inductor: {
        const std::string key = dev.kind == DeviceKind::Resistor    ? "R"
                                : dev.kind == DeviceKind::Capacitor ? "C"
                                                                    : "L";
        if (auto it = dev.bindings.find(key); it != dev.bindings.end()) {
          out << " param=" << g.parameter_space.at(it->second).name;
        } else {
          out << ' ' << fmt_num(dev.params.at(key));
        }
        break;
      }
      case DeviceKind::Diode:
      case DeviceKind::InductiveMultiport: {
        std::set<std::string> keys;
        for (const auto& [k, v] : dev.params) keys.insert(k);
        for (const auto& [k, v] : dev.bindings) keys.insert(k);
        for (const auto& k : keys) out << ' ' << k << '=' << fmt_key(g, dev, k);
        break;
      }
      case DeviceKind::VoltageSource:
      case DeviceKind::CurrentSource: {
        const auto& w = dev.waveform;
        if (w.kind == WaveKind::Constant) {
          out << " DC " << fmt_num(w.offset);
        } else {
          out << ' ' << to_string(w.kind) << '(' << fmt_num(w.offset) << ' ' << fmt_num(w.amplitude) << ' '
              << fmt_num(w.frequency) << ' ' << fmt_num(w.phase) << ')';
        }
        break;
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace dissect
