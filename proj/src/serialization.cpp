#include "ttcshield/serialization.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "ttcshield/error.hpp"

namespace ttcshield::io {
namespace {

using nlohmann::json;
using prediction::StateRow;

constexpr std::array<char, 8> kBufferMagic{'T', 'T', 'C', 'R', 'B', 'U', 'F', '\0'};
constexpr std::uint32_t kBufferVersion = 1;
constexpr std::uint32_t kHdvKind = 1;
constexpr std::uint32_t kCavKind = 2;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) { bytes(v, 4); }
  void u64(std::uint64_t v) { bytes(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void row(const StateRow& r) {
    for (double v : r.values()) f64(v);
  }
  void command(const sim::ControlCommand& c) {
    f64(c.throttle);
    f64(c.steering);
    f64(c.brake);
  }

 private:
  void bytes(std::uint64_t v, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(buf, n);
  }

  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string_view origin) : in_(in), origin_(origin) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }
  double f64() {
    const double v = std::bit_cast<double>(u64());
    if (!std::isfinite(v)) fail("non-finite value");
    return v;
  }
  StateRow row() {
    std::array<double, prediction::kStateDim> v{};
    for (double& x : v) x = f64();
    return StateRow::from(v);
  }
  sim::ControlCommand command() {
    sim::ControlCommand c;
    c.throttle = f64();
    c.steering = f64();
    c.brake = f64();
    try {
      sim::validate(c);
    } catch (const ValidationError& e) {
      fail(e.what());
    }
    return c;
  }
  void magic() {
    std::array<char, 8> m{};
    in_.read(m.data(), m.size());
    if (in_.gcount() != static_cast<std::streamsize>(m.size()) || m != kBufferMagic) {
      fail("not a replay-buffer file");
    }
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) fail("trailing bytes after the last transition");
  }

  [[noreturn]] void fail(std::string_view what) const {
    throw ValidationError(std::string(origin_) + ": " + std::string(what));
  }

 private:
  std::uint64_t bytes(int n) {
    unsigned char buf[8];
    in_.read(reinterpret_cast<char*>(buf), n);
    if (in_.gcount() != n) fail("truncated file");
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
  }

  std::istream& in_;
  std::string_view origin_;
};

std::uint64_t read_header(Reader& r, std::uint32_t kind) {
  r.magic();
  const std::uint32_t version = r.u32();
  if (version != kBufferVersion) {
    r.fail("unsupported buffer version " + std::to_string(version) + " (expected " +
           std::to_string(kBufferVersion) + ")");
  }
  const std::uint32_t stored = r.u32();
  if (stored != kind) r.fail(kind == kCavKind ? "expected an ego buffer" : "expected an HDV buffer");
  return r.u64();
}

void write_window(Writer& w, const prediction::HistoryWindow& window, bool controls) {
  for (const StateRow& row : window.rows) w.row(row);
  if (controls) {
    for (const sim::ControlCommand& c : window.controls) w.command(c);
  }
}

prediction::HistoryWindow read_window(Reader& r, bool controls) {
  prediction::HistoryWindow window;
  window.rows.resize(prediction::kHistoryLength);
  for (StateRow& row : window.rows) row = r.row();
  if (controls) {
    window.controls.resize(prediction::kHistoryLength);
    for (sim::ControlCommand& c : window.controls) c = r.command();
  }
  return window;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> number_array(const json& doc, const char* key, std::string_view origin) {
  const auto it = doc.find(key);
  if (it == doc.end() || !it->is_array()) {
    throw ValidationError(std::string(origin) + ": missing array '" + key + "'");
  }
  std::vector<double> out;
  out.reserve(it->size());
  for (const json& v : *it) {
    if (!v.is_number()) throw ValidationError(std::string(origin) + ": non-numeric entry in '" + key + "'");
    out.push_back(v.get<double>());
  }
  return out;
}

std::size_t count_field(const json& doc, const char* key, std::string_view origin) {
  const auto it = doc.find(key);
  if (it == doc.end() || !it->is_number_unsigned()) {
    throw ValidationError(std::string(origin) + ": missing or invalid '" + key + "'");
  }
  return it->get<std::size_t>();
}

}  // namespace

std::string predictor_to_json(const prediction::Predictor& model) {
  model.validate();
  json layers = json::array();
  for (const prediction::DenseLayer& l : model.layers) {
    layers.push_back({{"inputs", l.inputs},
                      {"outputs", l.outputs},
                      {"weights", l.weights},
                      {"bias", l.bias}});
  }
  const json doc = {{"format", kCheckpointFormat},
                    {"kind", prediction::to_string(model.kind)},
                    {"input_dim", model.input_dim},
                    {"output_dim", model.output_dim},
                    {"input_mean", model.input_mean},
                    {"input_scale", model.input_scale},
                    {"output_mean", model.output_mean},
                    {"output_scale", model.output_scale},
                    {"layers", layers}};
  return doc.dump() + "\n";
}

prediction::Predictor predictor_from_json(std::string_view text, std::string_view origin) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string(origin) + ": malformed JSON: " + e.what());
  }
  const std::string o(origin);
  if (!doc.is_object()) throw ValidationError(o + ": checkpoint must be a JSON object");
  const auto format = doc.find("format");
  if (format == doc.end() || !format->is_string() || *format != kCheckpointFormat) {
    throw ValidationError(o + ": checkpoint format tag is not '" + kCheckpointFormat + "'");
  }
  const auto kind = doc.find("kind");
  if (kind == doc.end() || !kind->is_string()) throw ValidationError(o + ": missing 'kind'");

  prediction::Predictor m;
  try {
    m.kind = prediction::parse_model_kind(kind->get<std::string>());
  } catch (const ValidationError& e) {
    throw ValidationError(o + ": " + e.what());
  }
  m.input_dim = count_field(doc, "input_dim", origin);
  m.output_dim = count_field(doc, "output_dim", origin);
  m.input_mean = number_array(doc, "input_mean", origin);
  m.input_scale = number_array(doc, "input_scale", origin);
  m.output_mean = number_array(doc, "output_mean", origin);
  m.output_scale = number_array(doc, "output_scale", origin);
  const auto layers = doc.find("layers");
  if (layers == doc.end() || !layers->is_array()) throw ValidationError(o + ": missing 'layers'");
  for (const json& l : *layers) {
    if (!l.is_object()) throw ValidationError(o + ": layer entries must be objects");
    m.layers.push_back({count_field(l, "inputs", origin), count_field(l, "outputs", origin),
                        number_array(l, "weights", origin), number_array(l, "bias", origin)});
  }
  try {
    m.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(o + ": " + e.what());
  }
  return m;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void save_predictor(const std::filesystem::path& path, const prediction::Predictor& model) {
  write_file_atomic(path, predictor_to_json(model));
}

prediction::Predictor load_predictor(const std::filesystem::path& path) {
  return predictor_from_json(read_text(path), path.string());
}

void save_models(const std::filesystem::path& dir, const pipeline::Models& models) {
  save_predictor(dir / kCavModelFile, models.cav);
  save_predictor(dir / kHdvModelFile, models.hdv);
}

pipeline::Models load_models(const std::filesystem::path& dir) {
  pipeline::Models m{load_predictor(dir / kCavModelFile), load_predictor(dir / kHdvModelFile)};
  if (m.cav.input_dim != prediction::kCavFeatures) {
    throw ValidationError((dir / kCavModelFile).string() + ": ego model must take " +
                          std::to_string(prediction::kCavFeatures) + " features");
  }
  if (m.hdv.input_dim != prediction::kHdvFeatures) {
    throw ValidationError((dir / kHdvModelFile).string() + ": HDV model must take " +
                          std::to_string(prediction::kHdvFeatures) + " features");
  }
  return m;
}

void write_buffer(std::ostream& out, const prediction::CavMemory& memory) {
  out.write(kBufferMagic.data(), kBufferMagic.size());
  Writer w(out);
  w.u32(kBufferVersion);
  w.u32(kCavKind);
  w.u64(memory.size());
  for (const prediction::TransitionCAV& t : memory) {
    write_window(w, t.window, true);
    w.command(t.applied_action_command);
    w.row(t.next);
  }
}

void write_buffer(std::ostream& out, const prediction::HdvMemory& memory) {
  out.write(kBufferMagic.data(), kBufferMagic.size());
  Writer w(out);
  w.u32(kBufferVersion);
  w.u32(kHdvKind);
  w.u64(memory.size());
  for (const prediction::TransitionHDV& t : memory) {
    write_window(w, t.window, false);
    w.row(t.next);
  }
}

prediction::CavMemory read_cav_buffer(std::istream& in, std::size_t capacity,
                                      std::string_view origin) {
  Reader r(in, origin);
  const std::uint64_t count = read_header(r, kCavKind);
  prediction::CavMemory memory(capacity);
  for (std::uint64_t i = 0; i < count; ++i) {
    prediction::TransitionCAV t;
    t.window = read_window(r, true);
    t.applied_action_command = r.command();
    t.next = r.row();
    memory.push(std::move(t));
  }
  r.expect_end();
  return memory;
}

prediction::HdvMemory read_hdv_buffer(std::istream& in, std::size_t capacity,
                                      std::string_view origin) {
  Reader r(in, origin);
  const std::uint64_t count = read_header(r, kHdvKind);
  prediction::HdvMemory memory(capacity);
  for (std::uint64_t i = 0; i < count; ++i) {
    prediction::TransitionHDV t;
    t.window = read_window(r, false);
    t.next = r.row();
    memory.push(std::move(t));
  }
  r.expect_end();
  return memory;
}

void save_buffers(const std::filesystem::path& dir, const pipeline::Buffers& buffers) {
  std::ostringstream cav;
  write_buffer(cav, buffers.cav);
  write_file_atomic(dir / kCavBufferFile, cav.str());
  std::ostringstream hdv;
  write_buffer(hdv, buffers.hdv);
  write_file_atomic(dir / kHdvBufferFile, hdv.str());
}

pipeline::Buffers load_buffers(const std::filesystem::path& dir, std::size_t capacity) {
  auto open = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("missing buffer file '" + p.string() + "'");
    return in;
  };
  pipeline::Buffers buffers(capacity);
  {
    const std::filesystem::path p = dir / kCavBufferFile;
    std::ifstream in = open(p);
    buffers.cav = read_cav_buffer(in, capacity, p.string());
  }
  {
    const std::filesystem::path p = dir / kHdvBufferFile;
    std::ifstream in = open(p);
    buffers.hdv = read_hdv_buffer(in, capacity, p.string());
  }
  return buffers;
}

}  // namespace ttcshield::io
