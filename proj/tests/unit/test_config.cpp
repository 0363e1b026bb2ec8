#include <gtest/gtest.h>

#include <unistd.h>

#include "pbill/config.hpp"

namespace pbill {
namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pbill-config-" + std::to_string(::getpid()) + "-" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Error config_error(const nlohmann::json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    return e;
  }
  return Error(ErrorCode::kInvalidArgument, "no error");
}

TEST(Endpoint, Parse) {
  auto ep = net::parse_endpoint("127.0.0.1:7001");
  EXPECT_EQ(ep.host, "127.0.0.1");
  EXPECT_EQ(ep.port, 7001);
  EXPECT_EQ(ep.str(), "127.0.0.1:7001");
  for (const char* bad : {"nohost", "host:", ":80", "h:99999", "h:12x"}) {
    EXPECT_THROW(net::parse_endpoint(bad), Error) << bad;
  }
}

TEST(ParseConfig, DefaultsAndFields) {
  auto c = parse_config(nlohmann::json::object());
  EXPECT_EQ(c.group_id, "ristretto255");
  EXPECT_EQ(c.intervals_per_day, 96u);
  EXPECT_FALSE(c.test_mode);

  auto j = nlohmann::json::parse(R"({
    "group_id": "test23", "params": "params.json", "secret_key": "/abs/meter.key",
    "meter_public_keys": ["a.pub", "b.pub"],
    "endpoints": {"pc": "127.0.0.1:7001", "bs": "127.0.0.1:7002"},
    "intervals_per_day": 48, "sampling_rate": 0.5, "ledger": "ledger.jsonl",
    "test_mode": true, "seed": 9})");
  auto d = parse_config(j, "/etc/pbill");
  EXPECT_EQ(d.group_id, "test23");
  EXPECT_EQ(*d.params_file, fs::path("/etc/pbill/params.json"));
  EXPECT_EQ(*d.secret_key, fs::path("/abs/meter.key"));
  EXPECT_EQ(d.meter_public_keys.size(), 2u);
  EXPECT_EQ(d.pc_endpoint->port, 7001);
  EXPECT_EQ(d.bs_endpoint->port, 7002);
  EXPECT_FALSE(d.tariff_endpoint);
  EXPECT_EQ(d.intervals_per_day, 48u);
  EXPECT_EQ(d.sampling_rate, 0.5);
  EXPECT_EQ(*d.seed, 9u);
}

TEST(ParseConfig, Rejections) {
  EXPECT_EQ(config_error({{"colour", "blue"}}).code(), ErrorCode::kConfig);
  EXPECT_EQ(config_error({{"group_id", "p256"}}).code(), ErrorCode::kUnknownGroup);
  EXPECT_EQ(config_error({{"seed", 1}}).code(), ErrorCode::kConfig);
  EXPECT_EQ(config_error({{"sampling_rate", 0}}).code(), ErrorCode::kConfig);
  EXPECT_EQ(config_error({{"sampling_rate", 1.5}}).code(), ErrorCode::kConfig);
  EXPECT_EQ(config_error({{"intervals_per_day", 0}}).code(), ErrorCode::kConfig);
  EXPECT_EQ(config_error({{"intervals_per_day", "many"}}).code(), ErrorCode::kConfig);
  EXPECT_EQ(config_error({{"endpoints", {{"proxy", "h:1"}}}}).code(), ErrorCode::kConfig);
}

TEST(Files, WriteRefusesToOverwrite) {
  TempDir dir;
  auto p = dir.path / "x.txt";
  write_text_file(p, "one", false);
  EXPECT_THROW(write_text_file(p, "two", false), Error);
  write_text_file(p, "two", true, fs::perms::owner_read | fs::perms::owner_write);
  EXPECT_EQ(fs::status(p).permissions() & fs::perms::all, fs::perms::owner_read | fs::perms::owner_write);
  std::ifstream in(p);
  std::string text;
  in >> text;
  EXPECT_EQ(text, "two");
  EXPECT_FALSE(fs::exists(dir.path / "x.txt.tmp"));
}

TEST(Files, KeysRoundTrip) {
  TempDir dir;
  SeededRandom rng(70);
  auto keys = MeterKeypair::generate("meter-3", rng);
  write_text_file(dir.path / "m.key", secret_key_json(keys).dump(), false);
  write_text_file(dir.path / "m.pub", public_key_json(keys).dump(), false);
  auto loaded = load_secret_key(dir.path / "m.key");
  EXPECT_EQ(loaded.meter_id(), "meter-3");
  EXPECT_EQ(loaded.public_key(), keys.public_key());
  auto pub = load_public_key(dir.path / "m.pub");
  EXPECT_EQ(pub.meter_id, "meter-3");
  EXPECT_EQ(pub.key, keys.public_key());
  write_text_file(dir.path / "bad.pub", R"({"meter_id": "x"})", false);
  EXPECT_THROW(load_public_key(dir.path / "bad.pub"), Error);
  EXPECT_THROW(load_secret_key(dir.path / "missing.key"), Error);
}

TEST(Files, ParamsMustReDerive) {
  TempDir dir;
  auto p = derive_params<TestGroup23>();
  write_text_file(dir.path / "params.json", params_json(p).dump(), false);
  auto pf = load_params_file(dir.path / "params.json");
  EXPECT_EQ(pf.group_id, "test23");
  EXPECT_EQ(pf.h, Bytes{9});

  auto j = params_json(p);
  j["h"] = "0d";  // 13 = 6^2 is in the subgroup but is not the derived h
  write_text_file(dir.path / "forged.json", j.dump(), false);
  EXPECT_THROW(load_params_file(dir.path / "forged.json"), Error);

  auto rj = params_json(derive_params<Ristretto255>());
  write_text_file(dir.path / "r.json", rj.dump(), false);
  EXPECT_EQ(load_params_file(dir.path / "r.json").group_id, "ristretto255");
}

TEST(Files, ValidateForRole) {
  TempDir dir;
  SeededRandom rng(71);
  auto keys = MeterKeypair::generate("meter-1", rng);
  write_text_file(dir.path / "params.json", params_json(derive_params<Ristretto255>()).dump(), false);
  write_text_file(dir.path / "meter.key", secret_key_json(keys).dump(), false);
  write_text_file(dir.path / "meter.pub", public_key_json(keys).dump(), false);
  nlohmann::json j = {{"params", "params.json"},
                      {"secret_key", "meter.key"},
                      {"meter_public_keys", {"meter.pub"}},
                      {"endpoints", {{"pc", "127.0.0.1:7001"}, {"bs", "127.0.0.1:7002"}}}};
  write_text_file(dir.path / "config.json", j.dump(), false);
  auto c = load_config(dir.path / "config.json");
  EXPECT_NO_THROW(validate_for_role(c, Role::kMeter));
  EXPECT_NO_THROW(validate_for_role(c, Role::kPc));
  EXPECT_NO_THROW(validate_for_role(c, Role::kBs));

  auto no_bs = c;
  no_bs.bs_endpoint.reset();
  EXPECT_THROW(validate_for_role(no_bs, Role::kPc), Error);
  EXPECT_THROW(validate_for_role(no_bs, Role::kBs), Error);
  auto wrong_group = c;
  wrong_group.group_id = "test23";
  EXPECT_THROW(validate_for_role(wrong_group, Role::kMeter), Error);
  auto missing_key = c;
  missing_key.secret_key = dir.path / "nope.key";
  EXPECT_THROW(validate_for_role(missing_key, Role::kMeter), Error);
}

}  // namespace
}  // namespace pbill
