// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <limits>

#include "boxgan/errors.hpp"
#include "boxgan/gabx.hpp"

namespace boxgan::ad {
namespace {

TensorBundle sample_bundle() {
  return {{"generator/0/weight", Tensor<float>(Shape{2, 1, 1, 3}, {1.5f, -0.0f, 3e-38f, 1e30f, -7.25f, 0.1f})},
          {"critic/2/bias", Tensor<float>(Shape{2}, {std::numeric_limits<float>::denorm_min(), -1.0f})},
          {"spec/generator", Tensor<float>::scalar(64.0f)}};
}

TEST(Gabx, ByteLayoutIsLittleEndian) {
  const std::string bytes = encode_gabx({{"ab", Tensor<float>(Shape{1}, {1.0f})}});
  const unsigned char expected[] = {'G', 'A', 'B', 'X', 1, 0, 0, 0, 1, 0, 0, 0,  // magic, version, count
                                    2, 0, 0, 0, 'a', 'b',                        // name
                                    1, 0, 0, 0, 1, 0, 0, 0,                      // rank, extent
                                    0x00, 0x00, 0x80, 0x3f};                     // 1.0f
  ASSERT_EQ(bytes.size(), sizeof(expected));
  EXPECT_EQ(std::memcmp(bytes.data(), expected, sizeof(expected)), 0);
}

TEST(Gabx, RoundTripIsBitExact) {
  const auto bundle = sample_bundle();
  const auto back = decode_gabx(encode_gabx(bundle));
  ASSERT_EQ(back.size(), bundle.size());
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    EXPECT_EQ(back[i].name, bundle[i].name);
    ASSERT_EQ(back[i].tensor.shape(), bundle[i].tensor.shape());
    EXPECT_EQ(std::memcmp(back[i].tensor.ptr(), bundle[i].tensor.ptr(),
                          sizeof(float) * static_cast<std::size_t>(bundle[i].tensor.size())),
              0);
  }
  EXPECT_EQ(encode_gabx(back), encode_gabx(bundle));
}

TEST(Gabx, EmptyBundle) {
  EXPECT_TRUE(decode_gabx(encode_gabx({})).empty());
}

TEST(Gabx, FileRoundTripAndLookup) {
  const auto path = std::filesystem::temp_directory_path() / "boxgan_test_gabx.gabx";
  write_gabx(path, sample_bundle());
  const auto back = read_gabx(path);
  ASSERT_NE(find_tensor(back, "critic/2/bias"), nullptr);
  EXPECT_EQ(find_tensor(back, "critic/2/bias")->shape(), (Shape{2}));
  EXPECT_EQ(find_tensor(back, "missing"), nullptr);
  std::filesystem::remove(path);
  EXPECT_THROW(read_gabx(path), DataError);
}

TEST(Gabx, RejectsCorruptContainers) {
  const std::string good = encode_gabx(sample_bundle());
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_gabx(bad_magic), DataError);

  std::string bad_version = good;
  bad_version[4] = 2;
  EXPECT_THROW(decode_gabx(bad_version), DataError);

  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, good.size() - 1}) {
    EXPECT_THROW(decode_gabx(std::string_view(good).substr(0, cut)), DataError) << cut;
  }
  EXPECT_THROW(decode_gabx(good + "x"), DataError);

  // An absurd extent must fail as truncation, not as an allocation.
  std::string huge = encode_gabx({{"t", Tensor<float>(Shape{1}, {0.0f})}});
  const std::size_t extent_pos = 4 + 4 + 4 + 4 + 1 + 4;
  for (int i = 0; i < 4; ++i) huge[extent_pos + i] = static_cast<char>(0xff);
  EXPECT_THROW(decode_gabx(huge), DataError);
}

}  // namespace
}  // namespace boxgan::ad
