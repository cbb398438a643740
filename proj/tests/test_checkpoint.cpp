// Copyright 2026 The L2T Authors
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

#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "l2t/checkpoint.hpp"

namespace l2t {
namespace {

Checkpoint sample(bool with_basis) {
  ArchMeta m;
  m.vocab = toy_vocabulary(3, true);
  m.ngram_order = 2;
  Rng rng(4);
  Checkpoint c;
  c.params = random_params(m, rng, 1.0);
  c.step = 123;
  if (with_basis) {
    std::vector<Vector> h;
    for (int i = 0; i < 5; ++i) h.push_back(rng.normal_vector(static_cast<Eigen::Index>(c.params.dim())));
    c.basis = fit_basis(h, 3, 120);
  }
  return c;
}

std::string bytes_of(const Checkpoint& c) {
  std::ostringstream os;
  write_checkpoint(os, c);
  return os.str();
}

Checkpoint from_bytes(const std::string& s) {
  std::istringstream is(s);
  return read_checkpoint(is);
}

TEST(Checkpoint, RoundTrip) {
  for (bool with_basis : {false, true}) {
    const Checkpoint c = sample(with_basis);
    const Checkpoint back = from_bytes(bytes_of(c));
    EXPECT_EQ(back.params, c.params);
    EXPECT_EQ(back.step, 123);
    ASSERT_EQ(back.basis.has_value(), with_basis);
    if (with_basis) {
      EXPECT_EQ(back.basis->basis, c.basis->basis);
      EXPECT_EQ(back.basis->built_at_step, 120);
      EXPECT_EQ(back.basis->window, 5);
      EXPECT_EQ(back.basis->coordinate_scale, 1.0);
    }
    EXPECT_EQ(bytes_of(back), bytes_of(c));
  }
}

TEST(Checkpoint, RoundTripRandomCoordinates) {
  Checkpoint c = sample(false);
  Rng rng(1);
  c.basis = random_coordinate_basis(c.params.dim(), 7, rng, 9);
  const Checkpoint back = from_bytes(bytes_of(c));
  EXPECT_EQ(back.basis->coordinate_scale, c.basis->coordinate_scale);
  EXPECT_EQ(back.basis->basis, c.basis->basis);
}

TEST(Checkpoint, RejectsVersionMismatch) {
  std::string s = bytes_of(sample(false));
  s[8] = static_cast<char>(kCheckpointVersion + 1);  // version follows the 8-byte magic
  try {
    from_bytes(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  std::string s = bytes_of(sample(true));
  std::string bad = s;
  bad[0] = 'X';
  EXPECT_THROW(from_bytes(bad), Error);
  for (std::size_t cut : {std::size_t{4}, std::size_t{20}, s.size() / 2, s.size() - 1})
    EXPECT_THROW(from_bytes(s.substr(0, cut)), Error) << cut;
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "l2t_ckpt_test.bin").string();
  const Checkpoint c = sample(true);
  save_checkpoint(path, c);
  EXPECT_EQ(load_checkpoint(path).params, c.params);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), Error);
}

}  // namespace
}  // namespace l2t
