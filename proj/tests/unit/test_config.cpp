#include <gtest/gtest.h>

#include "nalab/config.hpp"
#include "nalab/errors.hpp"

using namespace nalab;

TEST(Config, ParsesCommentsAndWhitespace) {
  const auto kv = KeyValueConfig::parse("# header\n a.b = 3 \n\nname=skirmish\nlist = 1, 2,,3\n");
  EXPECT_EQ(kv.get_int("a.b"), 3);
  EXPECT_EQ(kv.get_string("name"), "skirmish");
  EXPECT_EQ(kv.get_int_list("list"), (std::vector<long long>{1, 2, 3}));
  EXPECT_THROW(KeyValueConfig::parse("no equals sign"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse(" = 4"), ConfigError);
}

TEST(Config, TypedAccessRejectsMalformedValues) {
  KeyValueConfig kv;
  kv.set("i", "12x");
  kv.set("d", "nan");
  kv.set("b", "maybe");
  EXPECT_THROW(kv.get_int("i"), ConfigError);
  EXPECT_THROW(kv.get_double("d"), ConfigError);
  EXPECT_THROW(kv.get_bool("b"), ConfigError);
  EXPECT_THROW(kv.get_string("missing"), ConfigError);
  kv.set("d", "2.5e-3");
  EXPECT_DOUBLE_EQ(kv.get_double("d"), 2.5e-3);
}

TEST(Config, OverridesAreCheckedAgainstSchema) {
  KeyValueConfig schema;
  schema.set("seed", "1");
  schema.set("env.name", "skirmish");
  KeyValueConfig kv;
  kv.apply_override("seed=9", schema);
  EXPECT_EQ(kv.get_int("seed"), 9);
  try {
    kv.apply_override("env.nmae=corridor", schema);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("env.nmae"), std::string::npos);
  }
  kv.set("stray", "1");
  EXPECT_THROW(kv.check_keys(schema), ConfigError);
}

TEST(Config, SectionsAndCanonicalHash) {
  KeyValueConfig a;
  a.set("x.b", "2");
  a.set("x.a", "1");
  a.set("y", "3");
  const auto sec = a.section("x");
  EXPECT_EQ(sec.entries().size(), 2u);
  EXPECT_EQ(sec.get_int("a"), 1);
  KeyValueConfig b;
  b.merge_section("x", sec);
  b.set("y", "3");
  EXPECT_EQ(a.canonical_text(), b.canonical_text());
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.canonical_text(), "x.a = 1\nx.b = 2\ny = 3\n");
  // FNV-1a 64 offset basis for the empty text.
  EXPECT_EQ(KeyValueConfig{}.hash(), 0xcbf29ce484222325ULL);
  EXPECT_EQ(hash_hex(0xabcULL), "0000000000000abc");
}

TEST(Config, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 12345.678}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}
