#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include "json.hpp"

#include "pfl/errors.hpp"
#include "pfl/federation.hpp"

namespace pfl {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'P', 'F', 'L', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

void put_blob(std::vector<std::uint8_t>& out, const std::vector<std::uint8_t>& blob) {
  put<std::uint64_t>(out, blob.size());
  out.insert(out.end(), blob.begin(), blob.end());
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T))
      throw CheckpointError(std::string("truncated federation checkpoint while reading ") + what);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }

  std::span<const std::uint8_t> blob(const char* what) {
    const auto n = get<std::uint64_t>(what);
    if (bytes_.size() - pos_ < n)
      throw CheckpointError(std::string("truncated federation checkpoint in ") + what);
    auto out = bytes_.subspan(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::array<const char*, kNumClasses> kClassKeys = {"lane_keep", "left_lane_change",
                                                             "right_lane_change"};

}  // namespace

std::string to_json_line(const LogRecord& record) {
  ordered_json j;
  j["round"] = record.round;
  if (record.client)
    j["client"] = *record.client;
  else
    j["client"] = "server";
  j["loss"] = record.loss;
  ordered_json p = ordered_json::object();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (record.precision[c])
      p[kClassKeys[c]] = *record.precision[c];
    else
      p[kClassKeys[c]] = nullptr;
  }
  j["precision"] = std::move(p);
  return j.dump();
}

LogRecord parse_log_line(const std::string& line) {
  LogRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.round = j.at("round").get<std::size_t>();
    const auto& client = j.at("client");
    if (client.is_string()) {
      if (client.get<std::string>() != "server")
        throw std::invalid_argument("client must be an integer or \"server\"");
    } else {
      r.client = client.get<int>();
    }
    r.loss = j.at("loss").get<double>();
    const auto& p = j.at("precision");
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const auto& v = p.at(kClassKeys[c]);
      if (!v.is_null()) r.precision[c] = v.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad log record: ") + e.what(), 1);
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("bad log record: ") + e.what(), 1);
  }
  return r;
}

void write_log(const TrainingLog& log, std::ostream& out) {
  for (const auto& r : log) out << to_json_line(r) << '\n';
}

TrainingLog read_log(std::istream& in) {
  TrainingLog log;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      log.push_back(parse_log_line(line));
    } catch (const ParseError& e) {
      const std::string what = e.what();
      throw ParseError(what.substr(what.find(": ") + 2), n);
    }
  }
  return log;
}

void save_federation_checkpoint(const ServerState& server, std::span<const ClientState> clients,
                                const std::filesystem::path& path) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, server.round);
  put<std::uint64_t>(out, server.seed);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(server.registry.size()));
  for (const auto& [id, samples] : server.registry) {
    const auto it = std::find_if(clients.begin(), clients.end(),
                                 [&](const ClientState& c) { return c.id == id; });
    if (it == clients.end())
      throw CheckpointError("registered client " + std::to_string(id) + " missing from client list");
    put<std::int32_t>(out, id);
    put<std::uint64_t>(out, samples);
    put_blob(out, encode_checkpoint(it->decoder));
  }
  put_blob(out, encode_checkpoint(server.encoder));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("write failed for " + path.string());
}

ServerState load_federation_checkpoint(const std::filesystem::path& path,
                                       std::span<ClientState> clients) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError("not a federation checkpoint (bad magic)");
  Reader in(std::span<const std::uint8_t>(bytes).subspan(4));
  if (in.get<std::uint32_t>("version") != kVersion)
    throw CheckpointError("unsupported federation checkpoint version");

  ServerState server;
  server.round = static_cast<std::size_t>(in.get<std::uint64_t>("round"));
  server.seed = in.get<std::uint64_t>("seed");
  const auto count = in.get<std::uint32_t>("client count");
  if (count != clients.size())
    throw CheckpointError("checkpoint has " + std::to_string(count) + " clients, got " +
                          std::to_string(clients.size()));
  std::map<int, ParamSet> decoders;
  for (std::uint32_t i = 0; i < count; ++i) {
    const int id = in.get<std::int32_t>("client id");
    const auto samples = in.get<std::uint64_t>("sample count");
    server.registry[id] = static_cast<std::size_t>(samples);
    decoders[id] = decode_checkpoint(in.blob("decoder"));
  }
  server.encoder = decode_checkpoint(in.blob("encoder"));
  if (!in.done()) throw CheckpointError("trailing bytes after federation checkpoint");

  for (const auto& c : clients) {
    const auto it = server.registry.find(c.id);
    if (it == server.registry.end() || it->second != c.sample_count())
      throw CheckpointError("client " + std::to_string(c.id) + " does not match the checkpoint");
  }
  for (auto& c : clients) c.decoder = std::move(decoders.at(c.id));
  return server;
}

}  // namespace pfl
