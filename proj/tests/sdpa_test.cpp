#include <gtest/gtest.h>

#include "cabra/design.hpp"
#include "cabra/sdpa.hpp"

using namespace cabra;

TEST(Sdpa, RoundTripIsLossless) {
  for (Objective obj : {Objective::Feasibility, Objective::MaxEigZ}) {
    DesignSpec s = block_parallel_spec();
    s.objective = obj;
    SdpaModel M = to_sdpa(build_sdp(s));
    const std::string text = to_sdpa_string(M);
    SdpaModel back = parse_sdpa_string(text);
    EXPECT_TRUE(back.same_as(M));
    EXPECT_EQ(to_sdpa_string(back), text);
  }
}

TEST(Sdpa, StructureMatchesProblem) {
  DesignSpec s = DesignSpec::make(3, 1, Vec::Ones(1), 0.5);
  SdpProblem P = build_sdp(s);
  SdpaModel M = to_sdpa(P);
  EXPECT_EQ(M.m, P.vars.size);
  EXPECT_EQ(M.psd_blocks(), static_cast<int>(P.blocks.size()));
  EXPECT_EQ(M.block_struct.back(), -2 * static_cast<int>(P.Aeq.rows()));
  for (const auto& e : M.entries) {
    EXPECT_LE(e.i, std::abs(M.block_struct[e.block - 1]));
    if (M.block_struct[e.block - 1] > 0) EXPECT_LE(e.i, e.j);
  }
}

TEST(Sdpa, ValuesSurviveFullPrecision) {
  SdpaModel M;
  M.m = 2;
  M.block_struct = {2, -2};
  M.c = {0.1, -1.0 / 3.0};
  M.entries = {{0, 1, 1, 2, 1e-300}, {1, 1, 1, 1, M_PI}, {2, 2, 2, 2, -2.0 / 7.0}};
  SdpaModel back = parse_sdpa_string(to_sdpa_string(M));
  EXPECT_TRUE(back.same_as(M));
}

TEST(Sdpa, ParserAcceptsPunctuationAndComments) {
  const std::string text =
      "* a comment\n\"title\"\n2 = mDIM\n2 = nBLOCK\n(2, -2) = bLOCKsTRUCT\n"
      "{1.0, 2.0}\n0 1 1 1 1.5\n1 2 2 2 -1\n";
  SdpaModel M = parse_sdpa_string(text);
  EXPECT_EQ(M.m, 2);
  EXPECT_EQ(M.block_struct, (std::vector<int>{2, -2}));
  EXPECT_EQ(M.c, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(M.entries.size(), 2u);
}

TEST(Sdpa, ParserRejectsBadInput) {
  EXPECT_THROW(parse_sdpa_string("1 = mDIM\n"), SchemaError);
  EXPECT_THROW(parse_sdpa_string("1\n1\n2\n1.0\n0 3 1 1 1.0\n"), SchemaError);
  EXPECT_THROW(parse_sdpa_string("1\n1\n2\n1.0\n0 1 3 1 1.0\n"), SchemaError);
  EXPECT_THROW(parse_sdpa_string("1\n1\n2\n1.0\n0 1 x\n"), SchemaError);
}
