#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "singflow/analyze.hpp"
#include "singflow/fields.hpp"
#include "singflow/identify.hpp"

namespace singflow::io {

/// Version stamped into every emitted document and accepted on input.
inline constexpr int kSchemaVersion = 1;

/// Volatile envelope keys excluded from canonical_hash: the generation
/// timestamp and the wall-clock measurements. Everything else in a document
/// is a pure function of the inputs and the seed.
inline constexpr const char* kTimestampKey = "generated_at";
inline constexpr const char* kVolatileKey = "volatile";

// --- field configuration -----------------------------------------------

/// Serializes a field to the documented config schema: dim, kind,
/// domain_radius, and the kind's payload (params for parametric builtins,
/// matrix for linear, monomials + singularities for polynomial).
nlohmann::json field_to_json(const VectorFieldSpec& spec);

/// Rebuilds a field through the public factories, so every construction
/// invariant is re-validated. Malformed documents raise DomainError naming
/// the offending key.
VectorFieldSpec field_from_json(const nlohmann::json& doc);

/// Accepts a builtin name ("lorenz", "van_der_pol", "hopf", each with its
/// default parameters) or a path to a JSON config file.
VectorFieldSpec load_field(const std::string& name_or_path);

void save_field(const VectorFieldSpec& spec, const std::string& path);

// --- report serialization ----------------------------------------------

nlohmann::json to_json(const Vec& v);
nlohmann::json to_json(const Mat& m);
nlohmann::json to_json(const CVec& v);  // array of {re, im}
nlohmann::json to_json(const SingularityRecord& rec);
nlohmann::json to_json(const OrbitSegment& seg);  // times and points only
nlohmann::json to_json(const NormalVector& u);
nlohmann::json to_json(const PoincareImage& im);
nlohmann::json to_json(const IdentificationMap& h);
nlohmann::json to_json(const CheckReport& rep);
nlohmann::json to_json(const ReparamTrace& trace);
nlohmann::json to_json(const GlobalInvariance& gi);
nlohmann::json to_json(const ExponentEstimate& est);
nlohmann::json to_json(const PlissReport& rep);
nlohmann::json to_json(const PeriodicOrbitResult& orb);
nlohmann::json to_json(const PipelineReport& rep);
nlohmann::json to_json(const ContinuityPair& pair);
nlohmann::json to_json(const ContinuityRow& row);
nlohmann::json to_json(const ContinuityTable& table);

// --- envelopes, hashing, files -----------------------------------------

/// Standard output document: schema_version, kind, seed, the payload, and a
/// UTC timestamp under the volatile key set.
nlohmann::json envelope(const std::string& kind, nlohmann::json payload,
                        std::uint64_t seed);

/// FNV-1a over the canonical dump with the timestamp and the volatile
/// subtree removed at the top level. Two runs with equal inputs and seed
/// must produce equal hashes.
std::uint64_t canonical_hash(const nlohmann::json& doc);

void write_json(const nlohmann::json& doc, const std::string& path);
nlohmann::json read_json(const std::string& path);

// --- CSV ------------------------------------------------------------------

/// Orbit trace: header "t,x0,..,x{d-1}", one row per sample, full
/// round-trip precision.
void orbit_csv(const OrbitSegment& seg, std::ostream& out);

/// Pair table of a continuity sweep: one row per compared pair with the
/// direction distance and the per-level C^0 / C^1 distances (NaN for levels
/// that did not evaluate).
void continuity_csv(const ContinuityTable& table, std::ostream& out);

/// Reads whitespace- or comma-separated numbers; blank lines and lines
/// starting with '#' are skipped. Any other token raises DomainError.
std::vector<double> read_logs(std::istream& in);
std::vector<double> read_logs_file(const std::string& path);

}  // namespace singflow::io
