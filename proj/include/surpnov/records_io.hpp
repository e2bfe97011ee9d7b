#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "surpnov/scoring.hpp"

namespace surpnov {

/// Column order of the surprisal record TSV.
inline constexpr std::string_view kRecordTsvHeader =
    "item_id\ttarget_index\tsurface\tmethod\tmodel\tcorrection\tsurprisal_nats\t"
    "span_first\tspan_last\tleakage";

/// One TSV row without trailing newline. Surprisal keeps 17 significant digits
/// so that values re-read from disk are bit-identical.
std::string to_tsv_row(const SurprisalRecord& rec);
SurprisalRecord parse_tsv_row(std::string_view line, std::size_t line_no);

/// Reads a record TSV with header. Only the span's token indices and leakage
/// are persisted; the covered character range is left empty.
std::vector<SurprisalRecord> read_records(std::istream& in);
std::vector<SurprisalRecord> load_records(const std::filesystem::path& path);
void write_records(std::ostream& out, const std::vector<SurprisalRecord>& records);

/// Sorts by (item_id, target_index, method, model, correction).
void sort_records(std::vector<SurprisalRecord>& records);

std::string escape_tsv(std::string_view field);
std::string unescape_tsv(std::string_view field);

}  // namespace surpnov
