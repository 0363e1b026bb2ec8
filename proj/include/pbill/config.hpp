#pragma once

#include <sys/stat.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "pbill/group/params.hpp"
#include "pbill/metering.hpp"
#include "pbill/net.hpp"
#include "pbill/signature.hpp"

namespace pbill {

namespace fs = std::filesystem;

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
}

// Writes via a temporary file and rename. Refuses to replace an existing
// file unless `overwrite`.
inline void write_text_file(const fs::path& path, const std::string& text, bool overwrite,
                            fs::perms perms = fs::perms::owner_read | fs::perms::owner_write |
                                              fs::perms::group_read | fs::perms::others_read) {
  if (!overwrite && fs::exists(path)) {
    throw Error(ErrorCode::kIo, path.string() + " exists; pass --force to overwrite");
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::permissions(tmp, perms, ec);
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename into " + path.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// Key and parameter files

inline nlohmann::ordered_json secret_key_json(const MeterKeypair& keys) {
  return {{"meter_id", keys.meter_id()}, {"seed", to_hex(keys.seed())}};
}

inline nlohmann::ordered_json public_key_json(const MeterKeypair& keys) {
  return {{"meter_id", keys.meter_id()}, {"public_key", to_hex(keys.public_key().bytes)}};
}

inline MeterKeypair load_secret_key(const fs::path& path) {
  auto j = read_json_file(path);
  try {
    return MeterKeypair(j.at("meter_id").get<std::string>(),
                        from_hex(j.at("seed").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
}

struct MeterPublicKey {
  std::string meter_id;
  PublicKey key;
};

inline MeterPublicKey load_public_key(const fs::path& path) {
  auto j = read_json_file(path);
  try {
    return {j.at("meter_id").get<std::string>(),
            PublicKey::from_bytes(from_hex(j.at("public_key").get<std::string>()))};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
}

template <PrimeOrderGroup G>
nlohmann::ordered_json params_json(const GroupParams<G>& p) {
  return {{"group_id", std::string(G::kId)},
          {"domain_tag", p.domain_tag},
          {"g", to_hex(G::encode(p.g))},
          {"h", to_hex(G::encode(p.h))}};
}

struct ParamsFile {
  std::string group_id;
  std::string domain_tag;
  Bytes g;
  Bytes h;
};

// Reads a params file and checks it against a fresh derivation from its
// group id and tag; a file that does not re-derive is rejected.
inline ParamsFile load_params_file(const fs::path& path) {
  auto j = read_json_file(path);
  ParamsFile pf;
  try {
    pf.group_id = j.at("group_id").get<std::string>();
    pf.domain_tag = j.at("domain_tag").get<std::string>();
    pf.g = from_hex(j.at("g").get<std::string>());
    pf.h = from_hex(j.at("h").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  with_group(pf.group_id, [&]<class G>(std::type_identity<G>) {
    auto derived = derive_params<G>(pf.domain_tag);
    if (G::encode(derived.g) != pf.g || G::encode(derived.h) != pf.h) {
      throw Error(ErrorCode::kConfig,
                  path.string() + ": generators do not match the derivation for this tag");
    }
  });
  return pf;
}

// ---------------------------------------------------------------------------
// Run configuration

struct Config {
  std::string group_id = std::string(Ristretto255::kId);
  std::string domain_tag = std::string(kDefaultDomainTag);
  std::optional<fs::path> params_file;
  std::optional<fs::path> secret_key;            // meter
  std::vector<fs::path> meter_public_keys;       // back-end
  std::optional<net::Endpoint> meter_endpoint;   // where the meter sends (defaults to pc)
  std::optional<net::Endpoint> pc_endpoint;      // meter-facing listen address of the PC
  std::optional<net::Endpoint> bs_endpoint;
  std::optional<net::Endpoint> tariff_endpoint;  // defaults to bs
  std::uint32_t intervals_per_day = kIntervalsPerDay;
  double sampling_rate = 1.0;
  std::optional<fs::path> ledger;
  bool test_mode = false;
  std::optional<std::uint64_t> seed;
};

inline Config parse_config(const nlohmann::json& j, const fs::path& base = {}) {
  Config c;
  auto path_of = [&](const nlohmann::json& v) {
    fs::path p = v.get<std::string>();
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  auto endpoint_of = [](const nlohmann::json& v) {
    return net::parse_endpoint(v.get<std::string>());
  };
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "group_id") {
        c.group_id = value.get<std::string>();
      } else if (key == "domain_tag") {
        c.domain_tag = value.get<std::string>();
      } else if (key == "params") {
        c.params_file = path_of(value);
      } else if (key == "secret_key") {
        c.secret_key = path_of(value);
      } else if (key == "meter_public_keys") {
        for (const auto& p : value) c.meter_public_keys.push_back(path_of(p));
      } else if (key == "endpoints") {
        for (const auto& [role, ep] : value.items()) {
          if (role == "meter") {
            c.meter_endpoint = endpoint_of(ep);
          } else if (role == "pc") {
            c.pc_endpoint = endpoint_of(ep);
          } else if (role == "bs") {
            c.bs_endpoint = endpoint_of(ep);
          } else if (role == "tariff") {
            c.tariff_endpoint = endpoint_of(ep);
          } else {
            throw Error(ErrorCode::kConfig, "unknown endpoint role '" + role + "'");
          }
        }
      } else if (key == "intervals_per_day") {
        c.intervals_per_day = value.get<std::uint32_t>();
      } else if (key == "sampling_rate") {
        c.sampling_rate = value.get<double>();
      } else if (key == "ledger") {
        c.ledger = path_of(value);
      } else if (key == "test_mode") {
        c.test_mode = value.get<bool>();
      } else if (key == "seed") {
        if (!value.is_null()) c.seed = value.get<std::uint64_t>();
      } else {
        throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  if (!find_group(c.group_id)) {
    throw Error(ErrorCode::kUnknownGroup, "unknown group id '" + c.group_id + "'");
  }
  if (c.intervals_per_day == 0) throw Error(ErrorCode::kConfig, "intervals_per_day must be positive");
  if (!(c.sampling_rate > 0.0 && c.sampling_rate <= 1.0)) {
    throw Error(ErrorCode::kConfig, "sampling_rate must be in (0, 1]");
  }
  if (c.seed && !c.test_mode) {
    throw Error(ErrorCode::kConfig, "seed is only accepted with test_mode");
  }
  return c;
}

inline Config load_config(const fs::path& path) {
  return parse_config(read_json_file(path), path.parent_path());
}

enum class Role { kMeter, kPc, kBs };

// Startup checks: the files and endpoints the role needs are present.
inline void validate_for_role(const Config& c, Role role) {
  auto need_file = [](const std::optional<fs::path>& p, std::string_view what) {
    if (!p) throw Error(ErrorCode::kConfig, std::string(what) + " is not configured");
    if (!fs::exists(*p)) throw Error(ErrorCode::kConfig, std::string(what) + " " + p->string() + " does not exist");
  };
  need_file(c.params_file, "params file");
  switch (role) {
    case Role::kMeter:
      need_file(c.secret_key, "secret key");
      if (!c.meter_endpoint && !c.pc_endpoint) {
        throw Error(ErrorCode::kConfig, "meter needs endpoints.meter or endpoints.pc");
      }
      break;
    case Role::kPc:
      if (!c.pc_endpoint || !c.bs_endpoint) {
        throw Error(ErrorCode::kConfig, "privacy component needs endpoints.pc and endpoints.bs");
      }
      break;
    case Role::kBs:
      if (!c.bs_endpoint) throw Error(ErrorCode::kConfig, "back-end needs endpoints.bs");
      if (c.meter_public_keys.empty()) {
        throw Error(ErrorCode::kConfig, "back-end needs at least one meter public key");
      }
      for (const auto& p : c.meter_public_keys) need_file(p, "meter public key");
      break;
  }
  auto pf = load_params_file(*c.params_file);
  if (pf.group_id != c.group_id) {
    throw Error(ErrorCode::kConfig, "params file is for group '" + pf.group_id +
                                        "' but the config says '" + c.group_id + "'");
  }
}

}  // namespace pbill
