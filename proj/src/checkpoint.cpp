#include "dei2n/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dei2n/errors.hpp"

namespace dei2n {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'E', 'I', '2', 'N', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw DataError("truncated checkpoint " + path.string());
  return value;
}

std::string get_string(std::istream& in, std::size_t length, const std::filesystem::path& path) {
  std::string s(length, '\0');
  if (length && !in.read(s.data(), static_cast<std::streamsize>(length)))
    throw DataError("truncated checkpoint " + path.string());
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string meta = ckpt.metadata.dump();
  put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError(path.string() + " is not a checkpoint file");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  const auto meta_len = get<std::uint64_t>(in, path);
  ckpt.metadata = nlohmann::json::parse(get_string(in, meta_len, path));
  const auto count = get<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(in, get<std::uint32_t>(in, path), path);
    const auto rank = get<std::uint32_t>(in, path);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in, path);
    std::vector<double> values(num_elements(shape));
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double))))
      throw DataError("truncated checkpoint " + path.string() + " in tensor " + name);
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return ckpt;
}

void save_model(const std::filesystem::path& path, const ModelParams& params,
                const nlohmann::json& extra) {
  Checkpoint ckpt;
  ckpt.metadata = extra;
  ckpt.metadata["model"] = params.config();
  ckpt.metadata["ablation"] = params.ablation();
  ckpt.tensors = params.named();
  write_checkpoint(path, ckpt);
}

ModelParams load_model(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (!ckpt.metadata.contains("model") || !ckpt.metadata.contains("ablation"))
    throw DataError("checkpoint " + path.string() + " lacks model metadata");
  ModelParams params(ckpt.metadata.at("model").get<ModelConfig>(),
                     ckpt.metadata.at("ablation").get<AblationConfig>(), 0);
  const auto& named = params.named();
  if (named.size() != ckpt.tensors.size())
    throw DataError("checkpoint " + path.string() + " holds " +
                    std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                    std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, stored] = ckpt.tensors[i];
    Tensor target = named[i].second;
    if (name != named[i].first || stored.shape() != target.shape())
      throw DataError("checkpoint tensor " + name + " " + to_string(stored.shape()) +
                      " does not match model tensor " + named[i].first + " " +
                      to_string(target.shape()));
    std::copy(stored.values().begin(), stored.values().end(), target.values().begin());
  }
  return params;
}

}  // namespace dei2n
