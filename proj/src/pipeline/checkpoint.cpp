#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "tmhfs/pipeline.hpp"

namespace tmhfs {

namespace fs = std::filesystem;
using nlohmann::json;
using numeric::Shape;
using numeric::shape_numel;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'M', 'H', 'F'};

template <typename U>
void put(std::vector<unsigned char>& out, U value) {
  const auto* p = reinterpret_cast<const unsigned char*>(&value);
  out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
 public:
  Reader(const fs::path& path, std::vector<unsigned char> bytes) : path_(path), bytes_(std::move(bytes)) {}

  [[noreturn]] void fail(std::size_t at, const std::string& what) const {
    throw DataError(path_.string() + ": byte " + std::to_string(at) + ": " + what);
  }

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) fail(pos_, std::string("truncated ") + what);
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }
  const unsigned char* at(std::size_t offset) const { return bytes_.data() + offset; }

 private:
  fs::path path_;
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::string name;
  Shape shape;
  std::uint64_t offset;
  std::size_t header_at;
};

}  // namespace

void save_checkpoint(const fs::path& path, const Model& model) {
  const auto& bc = model.theta.config();
  const json meta = {
      {"backbone",
       {{"arch", to_string(bc.arch)},
        {"channels", bc.channels},
        {"input_hw", bc.input_hw},
        {"pooled_blocks", bc.pooled_blocks}}},
      {"source_classes", model.omega.classes()},
      {"delta_classes", model.delta.classes()},
      {"stage", to_string(model.stage)},
  };
  const std::string meta_text = meta.dump();
  const auto state = model.state();

  std::vector<unsigned char> head(kMagic, kMagic + 4);
  put<std::uint32_t>(head, kCheckpointVersion);
  put<std::uint32_t>(head, static_cast<std::uint32_t>(meta_text.size()));
  head.insert(head.end(), meta_text.begin(), meta_text.end());
  put<std::uint32_t>(head, static_cast<std::uint32_t>(state.size()));

  std::size_t table = 0;
  for (const auto& nt : state) table += 2 + nt.name.size() + 1 + 4 * nt.tensor.rank() + 8;
  std::uint64_t offset = head.size() + table;
  for (const auto& nt : state) {
    put<std::uint16_t>(head, static_cast<std::uint16_t>(nt.name.size()));
    head.insert(head.end(), nt.name.begin(), nt.name.end());
    put<std::uint8_t>(head, static_cast<std::uint8_t>(nt.tensor.rank()));
    for (auto d : nt.tensor.shape()) put<std::uint32_t>(head, static_cast<std::uint32_t>(d));
    put<std::uint64_t>(head, offset);
    offset += nt.tensor.numel() * sizeof(float);
  }
  for (const auto& nt : state)
    for (float v : nt.tensor.data()) put<float>(head, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": byte 0: cannot open for writing");
  out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
  if (!out) throw DataError(path.string() + ": byte 0: write failed");
}

Model load_checkpoint(const fs::path& path) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw DataError(path.string() + ": byte 0: cannot stat (" + ec.message() + ")");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": byte 0: cannot open");
  std::vector<unsigned char> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw DataError(path.string() + ": byte 0: read failed");
  Reader r(path, std::move(bytes));

  if (r.str(4, "magic") != std::string(kMagic, 4)) r.fail(0, "bad magic (expected TMHF)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) r.fail(4, "unsupported version " + std::to_string(version));
  const auto meta_len = r.get<std::uint32_t>("meta length");
  const std::size_t meta_at = r.pos();
  const std::string meta_text = r.str(meta_len, "meta");

  Model model;
  std::size_t delta_classes = 0;
  try {
    const json meta = json::parse(meta_text);
    const auto& b = meta.at("backbone");
    BackboneConfig bc;
    bc.arch = parse_arch(b.at("arch").get<std::string>());
    bc.channels = b.at("channels").get<std::size_t>();
    bc.input_hw = b.at("input_hw").get<std::size_t>();
    bc.pooled_blocks = b.at("pooled_blocks").get<std::size_t>();
    model = Model::init(bc, meta.at("source_classes").get<std::size_t>(), 0);
    delta_classes = meta.at("delta_classes").get<std::size_t>();
    model.stage = parse_stage(meta.at("stage").get<std::string>());
  } catch (const std::exception& e) {
    r.fail(meta_at, std::string("invalid meta: ") + e.what());
  }
  if (delta_classes != model.delta.classes()) {
    model.delta = SemanticHead<float>(model.feature_dim(), delta_classes, 0);
  }

  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.header_at = r.pos();
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    e.name = r.str(name_len, "tensor name");
    const auto rank = r.get<std::uint8_t>("tensor rank");
    for (std::uint8_t k = 0; k < rank; ++k) e.shape.push_back(r.get<std::uint32_t>("tensor dims"));
    e.offset = r.get<std::uint64_t>("tensor offset");
    entries.push_back(std::move(e));
  }

  std::vector<NamedTensor<float>> state;
  for (const auto& e : entries) {
    const std::size_t n = shape_numel(e.shape);
    if (e.offset > r.size() || (r.size() - e.offset) / sizeof(float) < n) {
      r.fail(e.header_at, "tensor '" + e.name + "' data runs past end of file");
    }
    std::vector<float> values(n);
    std::memcpy(values.data(), r.at(e.offset), n * sizeof(float));
    state.push_back({e.name, BasicTensor<float>(e.shape, std::move(values))});
  }
  try {
    model.load_state(state);
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": byte " + std::to_string(meta_at) + ": " + e.what());
  }
  return model;
}

}  // namespace tmhfs
