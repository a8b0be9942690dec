#pragma once

#include "ivqr/bootstrap.hpp"
#include "ivqr/dataset.hpp"
#include "ivqr/dgp.hpp"
#include "ivqr/estimator.hpp"
#include "ivqr/network.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ivqr::io {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view schema_tag = "ivqr-results/1";

enum class Format { json, csv };

std::string_view to_string(Format format);
Format parse_format(std::string_view text);

// Shortest decimal that parses back to the same double.
std::string format_double(double value);
// Whole-field parse; throws Error(parse_error) or Error(non_finite).
double parse_double(std::string_view text, std::size_t line);

// Header: cluster,y,x,w_1..w_dw,z_1..z_dz and an optional trailing v. Extra
// columns are ignored. With `intercept` a ones column is prepended to W on
// load and expected (and dropped) on save.
struct CsvOptions {
  bool intercept = true;
};

ClusteredDataset read_csv(std::istream& in, const CsvOptions& options = {});
ClusteredDataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
void write_csv(std::ostream& out, const ClusteredDataset& data, const CsvOptions& options = {});
void save_csv(const std::filesystem::path& path, const ClusteredDataset& data, const CsvOptions& options = {});

// Two-column edge list with an optional header; the node count is the
// largest id plus one unless `nodes` is larger.
network::Network read_edges(std::istream& in, Index nodes = 0);
network::Network load_edges(const std::filesystem::path& path, Index nodes = 0);
void write_labels(std::ostream& out, const network::Partition& partition);

// Non-finite doubles are written as the strings "inf", "-inf" and "nan".
Json to_json(double value);
double double_from_json(const Json& j);

Json to_json(const bootstrap::TestResult& result);
bootstrap::TestResult test_result_from_json(const Json& j);
Json to_json(const bootstrap::ConfidenceSet& set);
Json to_json(const estimation::TauFit& fit);
Json to_json(const sim::McTable& table);

// Document with the schema tag, the resolved configuration and the results.
Json document(std::string_view command, const Json& config, Json results);

std::string emit_results(const std::vector<bootstrap::TestResult>& results, Format format, const Json& config);
std::string emit_confidence_sets(const std::vector<bootstrap::ConfidenceSet>& sets, Format format,
                                 const Json& config);
std::string emit_fit(const estimation::IvqrFit& fit, Format format, const Json& config);
// Rejection percentages laid out as H0 and H1 panels of method rows by tau
// columns.
std::string emit_table(const sim::McTable& table, Format format, const Json& config);

void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace ivqr::io
