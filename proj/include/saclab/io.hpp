#pragma once
// JSON and CSV forms of parameters, fits, reports, configs, models and
// instances. Config readers collect every problem with a JSON-pointer path
// instead of stopping at the first.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "saclab/belief_pomdp.hpp"
#include "saclab/block_param.hpp"
#include "saclab/certificates.hpp"
#include "saclab/problem_gen.hpp"
#include "saclab/solvers.hpp"

namespace saclab {

using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

/// 17 significant digits, "nan"/"inf"/"-inf" for non-finite values.
std::string format_double(double v);

/// Collects type and range problems while reading a JSON object.
class JsonReader {
public:
    JsonReader(const json& obj, std::string path, std::vector<std::string>& errors);

    bool has(const char* key) const;
    /// Reads obj[key] into out if present; records a type error otherwise.
    void read(const char* key, double& out);
    void read(const char* key, std::size_t& out);
    void read(const char* key, std::uint64_t& out, int);
    void read(const char* key, bool& out);
    void read(const char* key, std::string& out);
    void read(const char* key, std::optional<double>& out);
    void require(const char* key);
    /// Records unknown keys.
    void reject_unknown(std::initializer_list<const char*> known);
    void error(const std::string& key, const std::string& msg);
    std::string pointer(const std::string& key) const { return path_ + "/" + key; }

private:
    const json& obj_;
    std::string path_;
    std::vector<std::string>& errs_;
};

/// Turns "a, b: message" from a validate() routine into "/base/a, /base/b: message".
std::string prefix_fields(const std::string& base, const std::string& err);
/// Same, with the base chosen per field.
std::string prefix_fields(const std::function<std::string(const std::string&)>& base_of, const std::string& err);

/// True for integer literals >= 0, whether stored signed or unsigned.
inline bool is_nonnegative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

json to_json(const BlockParam& p);
BlockParam block_param_from_json(const json& j);
json to_json(const SupportSet& s);
json to_json(const FitResult& f, bool with_trace = false);
FitResult fit_result_from_json(const json& j);
json to_json(const CertificateReport& r);
json to_json(const GenConfig& c);
json to_json(const SolverConfig& c);
json to_json(const PomdpModel& m);

/// Parse with validation; errors appended with paths under base.
GenConfig gen_config_from_json(const json& j, const std::string& base, std::vector<std::string>& errs);
SolverConfig solver_config_from_json(const json& j, const std::string& base, std::vector<std::string>& errs);
PomdpModel pomdp_from_json(const json& j, const std::string& base, std::vector<std::string>& errs);
/// Throwing variant.
PomdpModel pomdp_from_json(const json& j);

/// Header JSON (config, theta*, S*, metadata) at path, CSV body next to it (same stem, .csv).
void write_instance(const ProblemInstance& inst, const std::filesystem::path& header_path, const json& provenance = {});
ProblemInstance read_instance(const std::filesystem::path& header_path);

json read_json_file(const std::filesystem::path& p);
/// Writes via a temporary file and rename, so readers never see partial output.
void write_text_file(const std::filesystem::path& p, const std::string& content);

} // namespace saclab
