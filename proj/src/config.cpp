#include "fluidrisk/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace fluidrisk {

using nlohmann::json;

ConfigError::ConfigError(const std::string& field, int line, const std::string& what)
    : ModelError((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                 (field.empty() ? std::string() : "field '" + field + "': ") + what),
      field_(field),
      line_(line) {}

namespace {

// Best-effort line lookup: walks the dotted path, finding each quoted key after
// the previous one.
int locate(std::string_view text, const std::string& path) {
  std::size_t pos = 0;
  std::string key;
  std::istringstream is(path);
  bool found = false;
  while (std::getline(is, key, '.')) {
    if (key.empty() || key[0] == '[') continue;
    auto at = text.find("\"" + key + "\"", pos);
    if (at == std::string_view::npos) break;
    pos = at;
    found = true;
  }
  if (!found) return 0;
  int line = 1;
  for (std::size_t k = 0; k < pos; ++k)
    if (text[k] == '\n') ++line;
  return line;
}

struct Reader {
  std::string_view text;

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    throw ConfigError(path, locate(text, path), what);
  }

  void allow_only(const json& obj, const std::string& path, std::set<std::string> keys) const {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [k, v] : obj.items())
      if (!keys.count(k)) fail(path.empty() ? k : path + "." + k, "unknown field");
  }

  const json& need(const json& obj, const std::string& key, const std::string& path) const {
    auto it = obj.find(key);
    if (it == obj.end()) fail(path.empty() ? key : path + "." + key, "missing required field");
    return *it;
  }

  double number(const json& v, const std::string& path) const {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
  }

  Vector vec(const json& v, const std::string& path, int n = -1) const {
    if (!v.is_array()) fail(path, "expected an array of numbers");
    if (n >= 0 && static_cast<int>(v.size()) != n)
      fail(path, "expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = number(v[i], path);
    return out;
  }

  Matrix mat(const json& v, const std::string& path, int p) const {
    if (!v.is_array() || static_cast<int>(v.size()) != p)
      fail(path, "expected a " + std::to_string(p) + "x" + std::to_string(p) + " matrix");
    Matrix out(p, p);
    for (int i = 0; i < p; ++i) out.row(i) = vec(v[i], path, p).transpose();
    return out;
  }
};

}  // namespace

FluidModel parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    int line = 1;
    for (std::size_t k = 0; k < std::min<std::size_t>(e.byte, text.size()); ++k)
      if (text[k] == '\n') ++line;
    throw ConfigError("", line, std::string("malformed JSON: ") + e.what());
  }
  Reader rd{text};
  rd.allow_only(doc, "", {"name", "states", "alpha", "sigma", "cost_matrix", "gamma", "kernel"});

  std::string name;
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) rd.fail("name", "expected a string");
    name = doc["name"].get<std::string>();
  }
  Vector r = rd.vec(rd.need(doc, "states", ""), "states");
  const int p = static_cast<int>(r.size());
  if (p == 0) rd.fail("states", "at least one state is required");
  Vector alpha = rd.vec(rd.need(doc, "alpha", ""), "alpha", p);
  Vector sigma = doc.contains("sigma") ? rd.vec(doc["sigma"], "sigma", p) : Vector::Zero(p);
  Matrix cost =
      doc.contains("cost_matrix") ? rd.mat(doc["cost_matrix"], "cost_matrix", p) : Matrix::Zero(p, p);
  double gamma = rd.number(rd.need(doc, "gamma", ""), "gamma");

  const json& kj = rd.need(doc, "kernel", "");
  if (!kj.is_object()) rd.fail("kernel", "expected an object");
  const json& type = rd.need(kj, "type", "kernel");
  if (!type.is_string()) rd.fail("kernel.type", "expected a string");
  const std::string t = type.get<std::string>();

  DurationKernel kernel;
  try {
    if (t == "constant") {
      rd.allow_only(kj, "kernel", {"type", "C", "D"});
      kernel = DurationKernel::constant(rd.mat(rd.need(kj, "C", "kernel"), "kernel.C", p),
                                        rd.mat(rd.need(kj, "D", "kernel"), "kernel.D", p), gamma);
    } else if (t == "piecewise") {
      rd.allow_only(kj, "kernel", {"type", "breakpoints", "C", "D"});
      Vector b = rd.vec(rd.need(kj, "breakpoints", "kernel"), "kernel.breakpoints");
      const json& cj = rd.need(kj, "C", "kernel");
      const json& dj = rd.need(kj, "D", "kernel");
      const int m = static_cast<int>(b.size()) + 1;
      if (!cj.is_array() || static_cast<int>(cj.size()) != m)
        rd.fail("kernel.C", "expected " + std::to_string(m) + " matrices");
      if (!dj.is_array() || static_cast<int>(dj.size()) != m)
        rd.fail("kernel.D", "expected " + std::to_string(m) + " matrices");
      std::vector<Matrix> cs, ds;
      for (int k = 0; k < m; ++k) {
        cs.push_back(rd.mat(cj[k], "kernel.C", p));
        ds.push_back(rd.mat(dj[k], "kernel.D", p));
      }
      kernel = DurationKernel::piecewise(std::vector<double>(b.data(), b.data() + b.size()),
                                         std::move(cs), std::move(ds), gamma);
    } else if (t == "hazard") {
      rd.allow_only(kj, "kernel", {"type", "routing", "hazards"});
      Matrix q = rd.mat(rd.need(kj, "routing", "kernel"), "kernel.routing", p);
      const json& hs = rd.need(kj, "hazards", "kernel");
      if (!hs.is_array() || static_cast<int>(hs.size()) != p)
        rd.fail("kernel.hazards", "expected one hazard per state");
      std::vector<Hazard> hz;
      for (const auto& h : hs) {
        const std::string path = "kernel.hazards";
        const json& fam = rd.need(h, "family", path);
        if (!fam.is_string()) rd.fail(path + ".family", "expected a string");
        Hazard x;
        const std::string f = fam.get<std::string>();
        if (f == "exponential") {
          rd.allow_only(h, path, {"family", "rate"});
          x.family = Hazard::Family::exponential;
          x.a = rd.number(rd.need(h, "rate", path), path + ".rate");
        } else if (f == "pareto") {
          rd.allow_only(h, path, {"family", "a", "b"});
          x.family = Hazard::Family::pareto;
          x.a = rd.number(rd.need(h, "a", path), path + ".a");
          x.b = rd.number(rd.need(h, "b", path), path + ".b");
        } else if (f == "weibull") {
          rd.allow_only(h, path, {"family", "shape", "scale", "cap"});
          x.family = Hazard::Family::weibull;
          x.a = rd.number(rd.need(h, "shape", path), path + ".shape");
          x.b = rd.number(rd.need(h, "scale", path), path + ".scale");
          if (h.contains("cap")) x.cap = rd.number(h["cap"], path + ".cap");
        } else {
          rd.fail(path + ".family", "unknown hazard family '" + f + "'");
        }
        hz.push_back(x);
      }
      kernel = DurationKernel::hazard(std::move(hz), std::move(q), gamma);
    } else {
      rd.fail("kernel.type", "unknown kernel type '" + t + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const ModelError& e) {
    rd.fail("kernel", e.what());
  }
  std::vector<double> rates(r.data(), r.data() + p);
  try {
    return make_model(name, std::move(rates), std::move(kernel), alpha, sigma, cost);
  } catch (const ModelError& e) {
    throw ConfigError("", 0, e.what());
  }
}

FluidModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", 0, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

namespace {

json to_json(const Matrix& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

json to_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace

std::string model_to_json(const FluidModel& model) {
  json doc;
  if (!model.name.empty()) doc["name"] = model.name;
  doc["states"] = model.space.rates();
  doc["alpha"] = to_json(model.alpha);
  doc["sigma"] = to_json(model.sigma);
  doc["cost_matrix"] = to_json(model.cost);
  doc["gamma"] = model.kernel.gamma();
  json k;
  const auto& ker = model.kernel;
  switch (ker.kind()) {
    case DurationKernel::Kind::constant:
      k["type"] = "constant";
      k["C"] = to_json(ker.pieces_c()[0]);
      k["D"] = to_json(ker.pieces_d()[0]);
      break;
    case DurationKernel::Kind::piecewise: {
      k["type"] = "piecewise";
      k["breakpoints"] = ker.breakpoints();
      json cs = json::array(), ds = json::array();
      for (const auto& c : ker.pieces_c()) cs.push_back(to_json(c));
      for (const auto& d : ker.pieces_d()) ds.push_back(to_json(d));
      k["C"] = cs;
      k["D"] = ds;
      break;
    }
    case DurationKernel::Kind::hazard: {
      k["type"] = "hazard";
      k["routing"] = to_json(ker.routing());
      json hs = json::array();
      for (const auto& h : ker.hazards()) {
        switch (h.family) {
          case Hazard::Family::exponential:
            hs.push_back({{"family", "exponential"}, {"rate", h.a}});
            break;
          case Hazard::Family::pareto:
            hs.push_back({{"family", "pareto"}, {"a", h.a}, {"b", h.b}});
            break;
          case Hazard::Family::weibull:
            hs.push_back({{"family", "weibull"}, {"shape", h.a}, {"scale", h.b}, {"cap", h.cap}});
            break;
        }
      }
      k["hazards"] = hs;
      break;
    }
  }
  doc["kernel"] = k;
  return doc.dump(2);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace fluidrisk
