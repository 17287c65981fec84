#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "mtlens/errors.hpp"
#include "mtlens/parallel.hpp"
#include "mtlens/perturb.hpp"
#include "mtlens/unicode.hpp"
#include "test_util.hpp"

using namespace mtlens;
using namespace mtlens::perturb;
namespace mt = mtlens::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

std::size_t eligible_words(std::string_view s) {
  std::size_t n = 0;
  for (const auto& w : unicode::split_whitespace(s)) n += unicode::grapheme_count(w) >= 2;
  return n;
}

// Whitespace skeleton: every word replaced by a marker.
std::string skeleton(std::string_view s) {
  std::string out;
  bool in_word = false;
  for (char32_t cp : unicode::decode(s)) {
    if (unicode::is_space(cp)) {
      unicode::append_utf8(out, cp);
      in_word = false;
    } else if (!in_word) {
      out += 'W';
      in_word = true;
    }
  }
  return out;
}

std::string spaced_sentence(mt::SentenceGen& gen) {
  static const std::vector<std::string> seps = {" ", "  ", "\t", "  "};
  std::string s = gen.pick(4) == 0 ? " " : "";
  const std::size_t n = 1 + gen.pick(14);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += seps[gen.pick(seps.size())];
    s += gen.word();
  }
  return s;
}

constexpr NoiseKind kKinds[] = {NoiseKind::Swap, NoiseKind::CharDupe, NoiseKind::CharDrop};

}  // namespace

TEST(Perturb, WordEdits) {
  EXPECT_EQ(perturb_word("cat", NoiseKind::Swap, 0), "act");
  EXPECT_EQ(perturb_word("cat", NoiseKind::CharDupe, 1), "caat");
  EXPECT_EQ(perturb_word("cat", NoiseKind::CharDrop, 2), "ca");
  EXPECT_EQ(perturb_word("ab", NoiseKind::CharDrop, 0), "b");
  EXPECT_EQ(code_of([] { perturb_word("a", NoiseKind::CharDupe, 0); }), ErrorCode::WordTooShort);
  EXPECT_EQ(code_of([] { perturb_word("", NoiseKind::Swap, 0); }), ErrorCode::WordTooShort);
  EXPECT_EQ(code_of([] { perturb_word("cat", NoiseKind::Swap, 2); }), ErrorCode::PositionOutOfRange);
  EXPECT_EQ(code_of([] { perturb_word("cat", NoiseKind::CharDrop, 3); }), ErrorCode::PositionOutOfRange);
}

TEST(Perturb, WholeCharactersOnly) {
  // e + combining acute is one character.
  EXPECT_EQ(perturb_word("céa", NoiseKind::Swap, 0), "éca");
  EXPECT_EQ(perturb_word("céa", NoiseKind::CharDrop, 1), "ca");
  EXPECT_EQ(perturb_word("東京", NoiseKind::Swap, 0), "京東");
  EXPECT_EQ(perturb_word("🇩🇪x", NoiseKind::CharDupe, 0), "🇩🇪🇩🇪x");
  EXPECT_EQ(code_of([] { perturb_word("é", NoiseKind::Swap, 0); }), ErrorCode::WordTooShort);
}

TEST(Perturb, NoiseCountRounding) {
  EXPECT_EQ(noise_count(0.3, 10), 3u);
  EXPECT_EQ(noise_count(0.25, 10), 3u);
  EXPECT_EQ(noise_count(0.35, 10), 4u);
  EXPECT_EQ(noise_count(0.5, 1), 1u);
  EXPECT_EQ(noise_count(0.49, 1), 0u);
  EXPECT_EQ(noise_count(1.0, 7), 7u);
  EXPECT_EQ(noise_count(0.0, 7), 0u);
  // Integer oracle: round-half-up(j/10 * n) = floor((j*n + 5) / 10).
  for (int j = 0; j <= 10; ++j) {
    for (std::size_t n = 0; n < 60; ++n) {
      EXPECT_EQ(noise_count(j / 10.0, n), (j * n + 5) / 10) << j << " " << n;
    }
  }
}

TEST(Perturb, TrivialCases) {
  EXPECT_EQ(perturb_sentence("a I", {NoiseKind::Swap, 1.0, 1}, 0).text, "a I");
  EXPECT_TRUE(perturb_sentence("a I", {NoiseKind::Swap, 1.0, 1}, 0).audit.empty());
  EXPECT_EQ(perturb_sentence("", {NoiseKind::Swap, 1.0, 1}, 0).text, "");
  EXPECT_EQ(code_of([] { perturb_sentence("x y", {NoiseKind::Swap, 1.5, 1}, 0); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([] { perturb_sentence("x y", {NoiseKind::Swap, -0.1, 1}, 0); }), ErrorCode::ValidationError);
}

TEST(Perturb, TenWordsThirtyPercent) {
  const std::string s = "alpha beta gamma delta epsilon zeta theta iota kappa lambda";
  const NoiseSpec spec{NoiseKind::CharDrop, 0.3, 12345};
  const auto a = perturb_sentence(s, spec, 4);
  const auto b = perturb_sentence(s, spec, 4);
  EXPECT_EQ(a.audit.size(), 3u);
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(a.audit, b.audit);
  std::size_t changed = 0;
  const auto wa = unicode::split_whitespace(s);
  const auto wb = unicode::split_whitespace(a.text);
  for (std::size_t i = 0; i < wa.size(); ++i) changed += wa[i] != wb[i];
  EXPECT_EQ(changed, 3u);
}

TEST(Perturb, InvariantsProperty) {
  mt::SentenceGen gen(2024);
  for (int trial = 0; trial < 400; ++trial) {
    const auto s = spaced_sentence(gen);
    const auto n = eligible_words(s);
    for (int j = 0; j <= 10; ++j) {
      for (auto kind : kKinds) {
        const NoiseSpec spec{kind, j / 10.0, gen.engine()()};
        const auto seg = static_cast<std::uint64_t>(gen.pick(1000));
        const auto r = perturb_sentence(s, spec, seg);
        ASSERT_EQ(r.audit.size(), (j * n + 5) / 10) << s;
        if (j == 0) EXPECT_EQ(r.text, s);
        EXPECT_EQ(skeleton(r.text), skeleton(s));
        EXPECT_EQ(apply_audit(s, kind, r.audit), r.text);
        EXPECT_TRUE(std::is_sorted(r.audit.begin(), r.audit.end(),
                                   [](const auto& a, const auto& b) { return a.word_index < b.word_index; }));
        const auto again = perturb_sentence(s, spec, seg);
        EXPECT_EQ(again.text, r.text);
        const auto delta = static_cast<long>(unicode::graphemes(unicode::decode(r.text)).size()) -
                           static_cast<long>(unicode::graphemes(unicode::decode(s)).size());
        const auto k = static_cast<long>(r.audit.size());
        switch (kind) {
          case NoiseKind::Swap: EXPECT_EQ(delta, 0); break;
          case NoiseKind::CharDupe: EXPECT_EQ(delta, k); break;
          case NoiseKind::CharDrop: EXPECT_EQ(delta, -k); break;
        }
        for (const auto& e : r.audit) {
          EXPECT_FALSE(e.perturbed.empty());
          if (kind == NoiseKind::Swap) {
            auto a = unicode::graphemes(unicode::decode(e.original));
            auto b = unicode::graphemes(unicode::decode(e.perturbed));
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            EXPECT_EQ(a, b);
          }
        }
      }
    }
  }
}

TEST(Perturb, SelectionIsRoughlyUniform) {
  const std::string s = "aa bb cc dd ee ff gg hh";
  std::map<std::size_t, int> words;
  std::map<std::size_t, int> positions;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    const auto r = perturb_sentence(s, {NoiseKind::CharDupe, 0.25, 77}, static_cast<std::uint64_t>(t));
    for (const auto& e : r.audit) {
      ++words[e.word_index];
      ++positions[e.char_pos];
    }
  }
  // 2 of 8 words per trial -> 5000 picks each; 2 positions -> 20000 each.
  for (std::size_t w = 0; w < 8; ++w) EXPECT_NEAR(words[w], 5000, 300) << w;
  EXPECT_NEAR(positions[0], 20000, 600);
  EXPECT_NEAR(positions[1], 20000, 600);
}

TEST(Perturb, SegmentIndexChangesStream) {
  const std::string s = "alpha beta gamma delta epsilon zeta theta iota kappa lambda";
  const NoiseSpec spec{NoiseKind::Swap, 0.5, 9};
  int differ = 0;
  for (std::uint64_t i = 1; i < 20; ++i) differ += perturb_sentence(s, spec, i).text != perturb_sentence(s, spec, 0).text;
  EXPECT_GT(differ, 15);
}

TEST(Perturb, ApplyAuditRejectsMismatch) {
  EXPECT_EQ(code_of([] { apply_audit("cat dog", NoiseKind::Swap, {{5, "x", "y", 0}}); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([] { apply_audit("cat dog", NoiseKind::Swap, {{0, "dog", "odg", 0}}); }), ErrorCode::ValidationError);
}

namespace {
corpus::ParallelCorpus small_corpus(const mt::TempDir& dir, std::size_t n = 20) {
  const auto refs = mt::fixture_lines("metrics/ref.txt");
  std::string src, ref;
  for (std::size_t i = 0; i < n; ++i) {
    src += refs[i % refs.size()] + "\n";
    ref += refs[i % refs.size()] + "\n";
  }
  mt::write_file(dir / "source.txt", src);
  mt::write_file(dir / "ref.0.txt", ref);
  return corpus::load_corpus(corpus::parse_task_name("en_de_flores_devtest"), dir.path());
}

// Replaces round(frac * n) words of every reference with "zzz".
std::string degrade(const corpus::ParallelCorpus& c, double frac) {
  std::string out;
  for (const auto& s : c.segments) {
    auto words = unicode::split_whitespace(s.references[0]);
    const auto k = noise_count(frac, words.size());
    for (std::size_t i = 0; i < k; ++i) words[i] = "zzz";
    std::string line;
    for (const auto& w : words) line += (line.empty() ? "" : " ") + w;
    out += line + "\n";
  }
  return out;
}
}  // namespace

TEST(Perturb, CorpusExport) {
  mt::TempDir dir;
  const auto c = small_corpus(dir, 5);
  const auto p = perturb_corpus(c, {NoiseKind::Swap, 0.3, 42});
  const auto paths = export_perturbed(p, dir / "out");
  EXPECT_EQ(paths.source.filename(), "source.swap.0.3.txt");
  EXPECT_EQ(paths.audit.filename(), "audit.swap.0.3.tsv");
  const auto lines = corpus::read_lines(paths.source);
  EXPECT_EQ(lines, p.sources);
  const auto audit = corpus::read_lines(paths.audit);
  std::size_t entries = 0;
  for (const auto& a : p.audit) entries += a.size();
  EXPECT_EQ(audit.size(), entries + 1);
  EXPECT_EQ(audit[0], "segment_id\tword_index\tchar_pos\toriginal\tperturbed");
  // Segment i uses stream i.
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(p.sources[i], perturb_sentence(c.segments[i].source, p.spec, i).text);
  }
  // Thread count does not matter.
  set_thread_count(1);
  const auto q = perturb_corpus(c, {NoiseKind::Swap, 0.3, 42});
  set_thread_count(0);
  EXPECT_EQ(q.sources, p.sources);
  EXPECT_EQ(format_lambda(1.0), "1");
  EXPECT_EQ(format_lambda(0.05), "0.05");
}

TEST(Perturb, SweepDegradingHypotheses) {
  mt::TempDir dir;
  const auto c = small_corpus(dir);
  std::vector<SweepInput> inputs;
  mt::write_file(dir / "clean.txt", degrade(c, 0.0));
  inputs.push_back({NoiseKind::Swap, 0.0, dir / "clean.txt"});
  for (auto kind : {NoiseKind::CharDrop, NoiseKind::Swap}) {
    for (double l : {0.5, 0.1, 0.3}) {
      const auto name = std::string(to_string(kind)) + format_lambda(l) + ".txt";
      mt::write_file(dir / name, degrade(c, l));
      inputs.push_back({kind, l, dir / name});
    }
  }
  const auto r = robustness_sweep(c, inputs, {"bleu", "chrf"});
  ASSERT_TRUE(r.baseline.has_value());
  EXPECT_DOUBLE_EQ(r.baseline->scores.at("bleu"), 100.0);
  ASSERT_EQ(r.rows.size(), 6u);
  EXPECT_EQ(r.rows[0].kind, "swap");
  EXPECT_EQ(r.rows[3].kind, "chardrop");
  for (std::size_t g = 0; g < 2; ++g) {
    double prev = r.baseline->scores.at("bleu");
    double prev_l = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& row = r.rows[g * 3 + i];
      EXPECT_GT(row.lambda, prev_l);
      EXPECT_LT(row.scores.at("bleu"), prev);
      prev = row.scores.at("bleu");
      prev_l = row.lambda;
    }
  }
  const auto j = to_json(r);
  EXPECT_EQ(j["series"]["bleu"]["swap"].size(), 4u);
  EXPECT_EQ(j["series"]["bleu"]["swap"][0][0], 0.0);
  EXPECT_EQ(j["rows"].size(), 6u);
}

TEST(Perturb, SweepMissingAndBaselineOnly) {
  mt::TempDir dir;
  const auto c = small_corpus(dir);
  mt::write_file(dir / "clean.txt", degrade(c, 0.0));
  auto r = robustness_sweep(c, {{NoiseKind::Swap, 0.0, dir / "clean.txt"}}, {"bleu"});
  EXPECT_TRUE(r.baseline.has_value());
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(to_json(r)["series"]["bleu"]["clean"].size(), 1u);
  r = robustness_sweep(c, {{NoiseKind::Swap, 0.0, dir / "clean.txt"}, {NoiseKind::Swap, 0.2, dir / "nope.txt"}},
                       {"bleu"});
  EXPECT_TRUE(r.rows.empty());
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("missing"), std::string::npos);
  EXPECT_EQ(code_of([&] { robustness_sweep(c, {}, {"comet"}); }), ErrorCode::ValidationError);
}
