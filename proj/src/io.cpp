#include "singflow/io.hpp"

#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

namespace singflow::io {

namespace {

using nlohmann::json;

double require_number(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_number())
    throw DomainError(std::string("field config: missing numeric key '") +
                      key + "'");
  return doc[key].get<double>();
}

Vec vec_from_json(const json& arr, const char* what) {
  if (!arr.is_array() || arr.empty())
    throw DomainError(std::string("field config: '") + what +
                      "' must be a non-empty array");
  Vec v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number())
      throw DomainError(std::string("field config: '") + what +
                        "' must hold numbers");
    v[static_cast<long>(i)] = arr[i].get<double>();
  }
  return v;
}

}  // namespace

json field_to_json(const VectorFieldSpec& spec) {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["dim"] = spec.dim();
  doc["kind"] = spec.kind();
  doc["domain_radius"] = spec.domain_radius();
  if (!spec.params().empty()) doc["params"] = spec.params();
  if (spec.kind() == "linear") doc["matrix"] = to_json(spec.matrix());
  if (spec.kind() == "polynomial") {
    json coords = json::array();
    for (const PolyCoordinate& coord : spec.coords()) {
      json terms = json::array();
      for (const Monomial& m : coord)
        terms.push_back({{"coeff", m.coeff}, {"exponents", m.exponents}});
      coords.push_back(std::move(terms));
    }
    doc["monomials"] = std::move(coords);
    json seeds = json::array();
    for (const Vec& s : spec.singularity_seeds()) seeds.push_back(to_json(s));
    doc["singularities"] = std::move(seeds);
  }
  return doc;
}

VectorFieldSpec field_from_json(const json& doc) {
  if (!doc.is_object())
    throw DomainError("field config: document must be a JSON object");
  if (doc.contains("schema_version") &&
      (!doc["schema_version"].is_number_integer() ||
       doc["schema_version"].get<int>() > kSchemaVersion))
    throw DomainError("field config: unsupported schema_version");
  if (!doc.contains("kind") || !doc["kind"].is_string())
    throw DomainError("field config: missing string key 'kind'");
  const std::string kind = doc["kind"].get<std::string>();
  const double radius = require_number(doc, "domain_radius");
  const int dim = static_cast<int>(require_number(doc, "dim"));

  auto param = [&](const char* key) {
    if (!doc.contains("params") || !doc["params"].contains(key))
      throw DomainError(std::string("field config: kind '") + kind +
                        "' needs params." + key);
    return doc["params"][key].get<double>();
  };
  auto need_dim = [&](int expected) {
    if (dim != expected)
      throw DomainError("field config: kind '" + kind + "' has dim " +
                        std::to_string(expected));
  };

  if (kind == "linear") {
    if (!doc.contains("matrix") || !doc["matrix"].is_array())
      throw DomainError("field config: kind 'linear' needs 'matrix'");
    const json& rows = doc["matrix"];
    if (static_cast<int>(rows.size()) != dim)
      throw DomainError("field config: 'matrix' must have dim rows");
    Mat a(dim, dim);
    for (int i = 0; i < dim; ++i) {
      Vec row = vec_from_json(rows[i], "matrix");
      if (row.size() != dim)
        throw DomainError("field config: 'matrix' rows must have dim entries");
      a.row(i) = row.transpose();
    }
    return VectorFieldSpec::linear(a, radius);
  }
  if (kind == "lorenz") {
    need_dim(3);
    return VectorFieldSpec::lorenz(param("sigma"), param("rho"), param("beta"),
                                   radius);
  }
  if (kind == "van_der_pol") {
    need_dim(2);
    return VectorFieldSpec::van_der_pol(param("mu"), radius);
  }
  if (kind == "hopf") {
    need_dim(2);
    return VectorFieldSpec::hopf(param("alpha"), param("omega"), radius);
  }
  if (kind == "polynomial") {
    if (!doc.contains("monomials") || !doc["monomials"].is_array())
      throw DomainError("field config: kind 'polynomial' needs 'monomials'");
    const json& coords_doc = doc["monomials"];
    if (static_cast<int>(coords_doc.size()) != dim)
      throw DomainError(
          "field config: 'monomials' must list one coordinate per dim");
    std::vector<PolyCoordinate> coords;
    for (const json& coord_doc : coords_doc) {
      if (!coord_doc.is_array())
        throw DomainError("field config: each coordinate must be an array");
      PolyCoordinate coord;
      for (const json& term : coord_doc) {
        Monomial m;
        m.coeff = require_number(term, "coeff");
        if (!term.contains("exponents") || !term["exponents"].is_array() ||
            static_cast<int>(term["exponents"].size()) != dim)
          throw DomainError(
              "field config: each monomial needs dim 'exponents'");
        for (const json& e : term["exponents"]) {
          if (!e.is_number_integer())
            throw DomainError("field config: exponents must be integers");
          m.exponents.push_back(e.get<int>());
        }
        coord.push_back(std::move(m));
      }
      coords.push_back(std::move(coord));
    }
    std::vector<Vec> seeds;
    if (doc.contains("singularities")) {
      for (const json& s : doc["singularities"]) {
        Vec seed = vec_from_json(s, "singularities");
        if (seed.size() != dim)
          throw DomainError(
              "field config: singularity seeds must have dim entries");
        seeds.push_back(std::move(seed));
      }
    }
    return VectorFieldSpec::polynomial(dim, std::move(coords),
                                       std::move(seeds), radius);
  }
  throw DomainError("field config: unknown kind '" + kind + "'");
}

VectorFieldSpec load_field(const std::string& name_or_path) {
  if (name_or_path == "lorenz") return VectorFieldSpec::lorenz();
  if (name_or_path == "van_der_pol") return VectorFieldSpec::van_der_pol();
  if (name_or_path == "hopf") return VectorFieldSpec::hopf();
  return field_from_json(read_json(name_or_path));
}

void save_field(const VectorFieldSpec& spec, const std::string& path) {
  write_json(field_to_json(spec), path);
}

json to_json(const Vec& v) {
  json arr = json::array();
  for (long i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

json to_json(const Mat& m) {
  json rows = json::array();
  for (long i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const CVec& v) {
  json arr = json::array();
  for (long i = 0; i < v.size(); ++i)
    arr.push_back({{"re", v[i].real()}, {"im", v[i].imag()}});
  return arr;
}

json to_json(const SingularityRecord& rec) {
  return json{{"position", to_json(rec.position)},
              {"jacobian", to_json(rec.jacobian)},
              {"eigenvalues", to_json(rec.eigenvalues)},
              {"eigen_reconstruction_error", rec.eigen_reconstruction_error}};
}

json to_json(const OrbitSegment& seg) {
  json pts = json::array();
  for (const Vec& p : seg.points) pts.push_back(to_json(p));
  return json{{"times", seg.times}, {"points", std::move(pts)}};
}

json to_json(const NormalVector& u) {
  return json{{"base", to_json(u.base)}, {"vec", to_json(u.vec)}};
}

json to_json(const PoincareImage& im) {
  return json{{"image", to_json(im.image)},
              {"crossing_time", im.crossing_time},
              {"requested_time", im.requested_time},
              {"ratio_bound", im.ratio_bound}};
}

json to_json(const IdentificationMap& h) {
  return json{{"from", to_json(h.from)},
              {"to", to_json(h.to)},
              {"section_time", h.section_time},
              {"image", to_json(h.image)}};
}

json to_json(const CheckReport& rep) {
  return json{{"name", rep.name},
              {"pass", rep.pass},
              {"max_residual", rep.max_residual},
              {"threshold", rep.threshold},
              {"samples_used", rep.samples_used},
              {"samples_skipped", rep.samples_skipped},
              {"params", rep.params},
              {"results", rep.results},
              {"notes", rep.notes}};
}

json to_json(const ReparamTrace& trace) {
  return json{{"sample_times", trace.sample_times},
              {"theta_values", trace.theta_values},
              {"lipschitz_bound", trace.lipschitz_bound}};
}

json to_json(const GlobalInvariance& gi) {
  return json{{"trace", to_json(gi.trace)}, {"report", to_json(gi.report)}};
}

json to_json(const ExponentEstimate& est) {
  return json{{"exponents", est.exponents},
              {"field_rate", est.field_rate},
              {"step", est.step},
              {"block_count", est.block_count},
              {"logdet_gap", est.logdet_gap},
              {"block_log_norms", est.block_log_norms}};
}

json to_json(const PlissReport& rep) {
  return json{{"lambda", rep.lambda},
              {"constant", rep.constant},
              {"indices", rep.indices}};
}

json to_json(const PeriodicOrbitResult& orb) {
  return json{{"point", to_json(orb.point)},
              {"period", orb.period},
              {"multipliers", to_json(orb.multipliers)},
              {"residual", orb.residual},
              {"iterate_spectrum", to_json(orb.iterate_spectrum)},
              {"spectrum_gap", orb.spectrum_gap},
              {"iterations", orb.iterations},
              {"contraction_ratio", orb.contraction_ratio}};
}

json to_json(const PipelineReport& rep) {
  json doc{{"exponents", to_json(rep.exponents)},
           {"exponents_negative", rep.exponents_negative},
           {"pliss", to_json(rep.pliss)},
           {"pliss_density", rep.pliss_density},
           {"contraction_radius", rep.contraction_radius},
           {"contraction_time", rep.contraction_time},
           {"failed_stage", rep.failed_stage},
           {"notes", rep.notes}};
  if (rep.orbit) doc["orbit"] = to_json(*rep.orbit);
  return doc;
}

namespace {

json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;  // JSON has no NaN; undefined levels serialize as null
}

json level_array(const std::vector<double>& values) {
  json arr = json::array();
  for (double v : values) arr.push_back(finite_or_null(v));
  return arr;
}

}  // namespace

json to_json(const ContinuityPair& pair) {
  return json{{"x", to_json(pair.x)},
              {"y", to_json(pair.y)},
              {"dir_distance", pair.dir_distance},
              {"c0", level_array(pair.c0)},
              {"c1", level_array(pair.c1)},
              {"c2", level_array(pair.c2)},
              {"defined", pair.defined},
              {"note", pair.note}};
}

json to_json(const ContinuityRow& row) {
  return json{{"eps", row.eps},
              {"delta", row.delta},
              {"beta", row.beta},
              {"pairs_used", row.pairs_used},
              {"worst", row.worst}};
}

json to_json(const ContinuityTable& table) {
  json pairs = json::array();
  for (const ContinuityPair& p : table.pairs) pairs.push_back(to_json(p));
  json rows = json::array();
  for (const ContinuityRow& r : table.rows) rows.push_back(to_json(r));
  return json{{"pairs", std::move(pairs)},
              {"rows", std::move(rows)},
              {"control_distance", table.control_distance}};
}

json envelope(const std::string& kind, json payload, std::uint64_t seed) {
  char stamp[32];
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["kind"] = kind;
  doc["seed"] = seed;
  doc["payload"] = std::move(payload);
  doc[kTimestampKey] = stamp;
  return doc;
}

std::uint64_t canonical_hash(const json& doc) {
  json clean = doc;
  if (clean.is_object()) {
    clean.erase(kTimestampKey);
    clean.erase(kVolatileKey);
  }
  const std::string text = clean.dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void write_json(const json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open for writing: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw DomainError("write failed: " + path);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw DomainError("invalid JSON in " + path + ": " + e.what());
  }
  return doc;
}

namespace {

void csv_number(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

void orbit_csv(const OrbitSegment& seg, std::ostream& out) {
  const int d = seg.points.empty() ? 0 : static_cast<int>(seg.points[0].size());
  out << "t";
  for (int j = 0; j < d; ++j) out << ",x" << j;
  out << '\n';
  for (size_t i = 0; i < seg.times.size(); ++i) {
    csv_number(out, seg.times[i]);
    for (int j = 0; j < d; ++j) {
      out << ',';
      csv_number(out, seg.points[i][j]);
    }
    out << '\n';
  }
}

void continuity_csv(const ContinuityTable& table, std::ostream& out) {
  const size_t levels =
      table.pairs.empty() ? 0 : table.pairs.front().c0.size();
  out << "dir_distance,defined";
  for (size_t L = 0; L < levels; ++L) out << ",c0_level" << L;
  for (size_t L = 0; L < levels; ++L) out << ",c1_level" << L;
  out << '\n';
  for (const ContinuityPair& p : table.pairs) {
    csv_number(out, p.dir_distance);
    out << ',' << (p.defined ? 1 : 0);
    for (double v : p.c0) {
      out << ',';
      csv_number(out, v);
    }
    for (double v : p.c1) {
      out << ',';
      csv_number(out, v);
    }
    out << '\n';
  }
}

std::vector<double> read_logs(std::istream& in) {
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '#') continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream fields(line);
    std::string token;
    while (fields >> token) {
      size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        throw DomainError("logs: cannot parse number '" + token + "'");
      }
      if (used != token.size())
        throw DomainError("logs: cannot parse number '" + token + "'");
      out.push_back(v);
    }
  }
  return out;
}

std::vector<double> read_logs_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open: " + path);
  return read_logs(in);
}

}  // namespace singflow::io
