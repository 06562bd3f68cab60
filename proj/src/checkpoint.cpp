#include "softmoe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

#include <json.hpp>

namespace softmoe {

namespace {

constexpr char kMagic[8] = {'S', 'O', 'F', 'T', 'M', 'O', 'E', '\0'};
constexpr std::size_t kPreamble = sizeof(kMagic) + 1 + 8;

using Json = nlohmann::json;
using Reason = CheckpointError::Reason;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

// Segment names and shapes, in parameter_spans order.
std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> segment_table(const Model& m) {
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> t;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    const std::string lp = "layer" + std::to_string(l) + "/";
    t.push_back({lp + "phi", {layer.phi.rows(), layer.phi.cols()}});
    for (std::size_t j = 0; j < layer.bank.size(); ++j) {
      const auto& e = layer.bank.experts[j];
      const std::string ep = lp + "expert" + std::to_string(j) + "/";
      t.push_back({ep + "w1", {e.w1.rows(), e.w1.cols()}});
      t.push_back({ep + "b1", {1, e.b1.size()}});
      t.push_back({ep + "w2", {e.w2.rows(), e.w2.cols()}});
      t.push_back({ep + "b2", {1, e.b2.size()}});
    }
  }
  if (const auto* h = std::get_if<LinearHead>(&m.head)) {
    t.push_back({"head/w", {h->w.rows(), h->w.cols()}});
    t.push_back({"head/b", {1, h->b.size()}});
  }
  return t;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  std::vector<std::uint8_t> payload;
  for (const auto& block : model.parameter_spans())
    for (double v : block) put_u64(payload, std::bit_cast<std::uint64_t>(v));

  Json segments = Json::array();
  std::size_t offset = 0;
  for (const auto& [name, shape] : segment_table(model)) {
    const std::size_t count = shape.first * shape.second;
    segments.push_back({{"name", name}, {"offset", offset}, {"count", count},
                        {"shape", {shape.first, shape.second}}});
    offset += count;
  }
  const Json header = {
      {"format_version", kCheckpointVersion},
      {"layers", model.layers.size()},
      {"tokens", model.tokens},
      {"dim", model.dim()},
      {"experts", model.experts()},
      {"hidden_budget", model.layers.front().bank.hidden_budget},
      {"head", model.is_classifier() ? "linear" : "summation"},
      {"classes", model.is_classifier() ? std::get<LinearHead>(model.head).classes() : 0},
      {"segments", segments},
      {"payload_count", offset},
      {"checksum", fnv1a64({reinterpret_cast<const char*>(payload.data()), payload.size()})},
  };
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreamble) throw CheckpointError(Reason::Corrupt, "checkpoint truncated in preamble");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(Reason::BadMagic, "not a checkpoint (bad magic)");
  if (bytes[sizeof(kMagic)] != kCheckpointVersion)
    throw CheckpointError(Reason::Version, "unsupported checkpoint version " +
                                               std::to_string(bytes[sizeof(kMagic)]));
  const std::uint64_t header_len = get_u64(bytes.data() + sizeof(kMagic) + 1);
  if (header_len > bytes.size() - kPreamble)
    throw CheckpointError(Reason::Corrupt, "checkpoint truncated in header");

  Json header;
  ModelSpec spec;
  std::uint64_t payload_count = 0;
  std::uint64_t checksum = 0;
  try {
    header = Json::parse(std::string_view(reinterpret_cast<const char*>(bytes.data() + kPreamble), header_len));
    if (header.at("format_version").get<int>() != kCheckpointVersion)
      throw CheckpointError(Reason::Version, "header version disagrees with preamble");
    spec.layers = header.at("layers").get<std::size_t>();
    spec.tokens = header.at("tokens").get<std::size_t>();
    spec.dim = header.at("dim").get<std::size_t>();
    spec.experts = header.at("experts").get<std::size_t>();
    spec.hidden_budget = header.at("hidden_budget").get<std::size_t>();
    const auto head = header.at("head").get<std::string>();
    spec.classes = header.at("classes").get<std::size_t>();
    if ((head == "linear") != (spec.classes > 0) || (head != "linear" && head != "summation"))
      throw CheckpointError(Reason::Shape, "inconsistent head description");
    payload_count = header.at("payload_count").get<std::uint64_t>();
    checksum = header.at("checksum").get<std::uint64_t>();
  } catch (const Json::exception& e) {
    throw CheckpointError(Reason::Corrupt, std::string("bad checkpoint header: ") + e.what());
  }
  if (spec.layers == 0 || spec.tokens == 0 || spec.dim == 0 || spec.experts == 0 || spec.hidden_budget == 0)
    throw CheckpointError(Reason::Shape, "checkpoint has a zero dimension");

  RngStream unused(0, "checkpoint");
  Model model = build_model(spec, unused);
  const auto table = segment_table(model);
  const auto& segs = header.at("segments");
  if (!segs.is_array() || segs.size() != table.size())
    throw CheckpointError(Reason::Shape, "segment table does not match the model shape");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& [name, shape] = table[i];
    const auto& s = segs[i];
    if (s.value("name", "") != name || s.value("offset", std::size_t{0}) != offset ||
        s.value("count", std::size_t{0}) != shape.first * shape.second)
      throw CheckpointError(Reason::Shape, "segment " + std::to_string(i) + " (" + name + ") mismatch");
    offset += shape.first * shape.second;
  }
  if (payload_count != offset) throw CheckpointError(Reason::Shape, "payload count mismatch");

  const std::size_t start = kPreamble + header_len;
  if (bytes.size() - start != payload_count * 8)
    throw CheckpointError(Reason::Corrupt, "payload size " + std::to_string(bytes.size() - start) +
                                               " bytes, expected " + std::to_string(payload_count * 8));
  if (fnv1a64({reinterpret_cast<const char*>(bytes.data() + start), bytes.size() - start}) != checksum)
    throw CheckpointError(Reason::Corrupt, "payload checksum mismatch");

  const std::uint8_t* p = bytes.data() + start;
  for (auto block : model.parameter_spans())
    for (double& v : block) {
      v = std::bit_cast<double>(get_u64(p));
      p += 8;
    }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Reason::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(Reason::Io, "write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Reason::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace softmoe
