// Copyright 2026 The IoT-MP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "iotmp/api/tokens.hpp"
#include "iotmp/core/json_codec.hpp"
#include "support/oracle.hpp"
#include "support/token_fuzz.hpp"

namespace iotmp::api {
namespace {

std::string bytes_of(const crypto::Digest& d) { return std::string(d.begin(), d.end()); }

TEST(Oracle, KnownAnswers) {
  // FIPS 180-2 and RFC 4231 test case 2 vectors.
  EXPECT_EQ(oracle::hex(oracle::sha256("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(oracle::hex(oracle::sha256("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(oracle::hex(oracle::hmac_sha256("Jefe", "what do ya want for nothing?")),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

TEST(Crypto, AgreesWithOracle) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 300; ++i) {
    std::string key(rng() % 100, '\0'), data(rng() % 300, '\0');
    for (auto& c : key) c = static_cast<char>(rng());
    for (auto& c : data) c = static_cast<char>(rng());
    ASSERT_EQ(bytes_of(crypto::sha256(data)), bytes_of(oracle::sha256(data)));
    ASSERT_EQ(bytes_of(crypto::hmac_sha256(key, data)), bytes_of(oracle::hmac_sha256(key, data)));
    ASSERT_EQ(crypto::base64url_encode(std::string_view(data)), oracle::base64url(data));
    ASSERT_EQ(crypto::base64url_decode(oracle::base64url(data)), data);
  }
}

TEST(Crypto, Base64urlIsStrict) {
  EXPECT_FALSE(crypto::base64url_decode("QQ=="));   // padding
  EXPECT_FALSE(crypto::base64url_decode("QR"));     // non-zero trailing bits
  EXPECT_FALSE(crypto::base64url_decode("Q"));      // impossible length
  EXPECT_FALSE(crypto::base64url_decode("a+b/"));   // standard alphabet
  EXPECT_EQ(crypto::base64url_decode("QQ"), std::string("A"));
}

TEST(Crypto, HexRoundtrip) {
  const std::vector<std::uint8_t> b{0, 1, 0xab, 0xff};
  EXPECT_EQ(crypto::to_hex(b), "0001abff");
  EXPECT_EQ(crypto::from_hex("0001abff"), b);
  EXPECT_FALSE(crypto::from_hex("0g"));
  EXPECT_FALSE(crypto::from_hex("abc"));
}

struct Fixture : ::testing::Test {
  manager::KvStore store;
  crypto::SeededRandom random{42};
  AppRegistry apps{store, random};
  TokenService tokens{"server-secret-for-tests", apps};
};

TEST_F(Fixture, RegisterTwiceIsTaken) {
  apps.register_app("weatherApp", Role::IotApp, 0);
  try {
    apps.register_app("weatherApp", Role::IotApp, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AppIDTaken);
  }
}

TEST_F(Fixture, GeneratedIdsAreUnique) {
  std::set<std::string> ids;
  for (int i = 0; i < 50; ++i) ids.insert(apps.register_app(std::nullopt, Role::IotApp, 0).appid.str());
  EXPECT_EQ(ids.size(), 50u);
}

TEST_F(Fixture, SecretIsStoredOnlyAsDigest) {
  auto reg = apps.register_app("a1", Role::IotApp, 0);
  EXPECT_EQ(reg.secret.size(), 64u);
  const auto dump = store.dump().dump();
  EXPECT_EQ(dump.find(reg.secret), std::string::npos);
  EXPECT_EQ(apps.find("a1")->secret_sha256, oracle::hex(oracle::sha256(reg.secret)));
}

TEST_F(Fixture, ConcurrentRegistrationOfOneIdHasOneWinner) {
  for (int round = 0; round < 20; ++round) {
    const std::string id = "race" + std::to_string(round);
    std::atomic<int> wins{0}, taken{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&] {
        try {
          apps.register_app(id, Role::IotApp, 0);
          ++wins;
        } catch (const Error& e) {
          if (e.code() == Errc::AppIDTaken) ++taken;
        }
      });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(wins.load(), 1);
    EXPECT_EQ(taken.load(), 7);
  }
}

TEST_F(Fixture, MintVerifyRoundtrip) {
  auto reg = apps.register_app("weatherApp", Role::ManagementApp, 0);
  const auto token = tokens.mint("weatherApp", reg.secret, 1000);
  EXPECT_EQ(std::count(token.begin(), token.end(), '.'), 2);
  const auto claims = tokens.verify(token, 2000);
  EXPECT_EQ(claims.appid.str(), "weatherApp");
  EXPECT_EQ(claims.role, Role::ManagementApp);
  EXPECT_EQ(claims.exp, 1000 + TokenService::kDefaultTtlMs);
}

TEST_F(Fixture, WrongSecretIsBadCredentials) {
  apps.register_app("weatherApp", Role::IotApp, 0);
  try {
    tokens.mint("weatherApp", std::string(64, '0'), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadCredentials);
  }
  EXPECT_THROW(tokens.mint("nobody", std::string(64, '0'), 0), Error);
}

TEST_F(Fixture, SignatureMatchesOracle) {
  auto reg = apps.register_app("weatherApp", Role::IotApp, 0);
  const auto token = tokens.mint("weatherApp", reg.secret, 5000);
  const auto d1 = token.find('.'), d2 = token.rfind('.');
  const auto signing_input = token.substr(0, d2);
  EXPECT_EQ(token.substr(d2 + 1), oracle::base64url(bytes_of(oracle::hmac_sha256("server-secret-for-tests", signing_input))));
  EXPECT_EQ(oracle::unbase64url(token.substr(0, d1)), std::string(R"({"alg":"HS256","typ":"JWT"})"));
  const auto payload = Json::parse(*oracle::unbase64url(token.substr(d1 + 1, d2 - d1 - 1)));
  EXPECT_EQ(payload["appid"], "weatherApp");
  EXPECT_EQ(payload["proof"], oracle::hex(oracle::sha256(reg.secret)));
  EXPECT_EQ(payload["exp"], 5000 + TokenService::kDefaultTtlMs);
  EXPECT_EQ(payload.dump().find(reg.secret), std::string::npos);
}

TEST_F(Fixture, ExpiredTokenIsUnauthorized) {
  auto reg = apps.register_app("a", Role::IotApp, 0);
  const auto token = tokens.mint("a", reg.secret, 0);
  EXPECT_NO_THROW(tokens.verify(token, TokenService::kDefaultTtlMs - 1));
  try {
    tokens.verify(token, TokenService::kDefaultTtlMs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Unauthorized);
  }
}

TEST_F(Fixture, OtherServerSecretIsUnauthorized) {
  auto reg = apps.register_app("a", Role::IotApp, 0);
  TokenService other("another-secret", apps);
  EXPECT_THROW(tokens.verify(other.mint("a", reg.secret, 0), 1), Error);
}

TEST_F(Fixture, EverySingleCharacterSubstitutionIsRejected) {
  auto reg = apps.register_app("a", Role::IotApp, 0);
  const auto token = tokens.mint("a", reg.secret, 0);
  const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_.";
  std::size_t tried = 0;
  for (std::size_t i = 0; i < token.size(); ++i) {
    for (std::size_t k = 0; k < alphabet.size(); k += 7) {
      auto t = token;
      if (t[i] == alphabet[k]) continue;
      t[i] = alphabet[k];
      ++tried;
      EXPECT_THROW(tokens.verify(t, 1), Error) << i;
    }
  }
  EXPECT_GT(tried, token.size() * 5);
}

TEST_F(Fixture, RandomMutationsAllRejected) {
  auto reg = apps.register_app("a", Role::IotApp, 0);
  oracle::TokenMutator mutator(3);
  for (int i = 0; i < 2000; ++i) {
    const auto token = tokens.mint("a", reg.secret, i);
    const auto bad = mutator.mutate(token);
    try {
      tokens.verify(bad, i + 1);
      FAIL() << bad;
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), Errc::Unauthorized);
    }
  }
}

}  // namespace
}  // namespace iotmp::api
