#pragma once

// Predictor checkpoints (JSON) and replay-buffer files (binary), both tagged
// with a format version. Loading anything with a different tag, a truncated
// body or inconsistent shapes throws ValidationError; failed writes throw IoError.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "ttcshield/pipeline.hpp"
#include "ttcshield/prediction.hpp"

namespace ttcshield::io {

inline constexpr const char* kCheckpointFormat = "ttcshield-predictor-v1";
inline constexpr const char* kCavModelFile = "f_cav.json";
inline constexpr const char* kHdvModelFile = "f_hdv.json";
inline constexpr const char* kCavBufferFile = "r_cav.bin";
inline constexpr const char* kHdvBufferFile = "r_hdv.bin";

// Doubles are written in shortest round-trip form, so load(save(m)) == m exactly.
std::string predictor_to_json(const prediction::Predictor& model);
prediction::Predictor predictor_from_json(std::string_view text, std::string_view origin = "<model>");

void save_predictor(const std::filesystem::path& path, const prediction::Predictor& model);
prediction::Predictor load_predictor(const std::filesystem::path& path);

void save_models(const std::filesystem::path& dir, const pipeline::Models& models);
pipeline::Models load_models(const std::filesystem::path& dir);

// Little-endian header: 8-byte magic, u32 version, u32 transition kind, u64 count;
// then per transition the window rows, control rows (ego only), applied command
// (ego only) and next row as raw IEEE doubles.
void write_buffer(std::ostream& out, const prediction::CavMemory& memory);
void write_buffer(std::ostream& out, const prediction::HdvMemory& memory);
prediction::CavMemory read_cav_buffer(std::istream& in, std::size_t capacity,
                                      std::string_view origin = "<buffer>");
prediction::HdvMemory read_hdv_buffer(std::istream& in, std::size_t capacity,
                                      std::string_view origin = "<buffer>");

void save_buffers(const std::filesystem::path& dir, const pipeline::Buffers& buffers);
// At most `capacity` transitions are kept per buffer, the newest ones.
pipeline::Buffers load_buffers(const std::filesystem::path& dir, std::size_t capacity);

// Writes `content` to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace ttcshield::io
