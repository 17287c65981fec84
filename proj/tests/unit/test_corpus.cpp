#include <gtest/gtest.h>

#include "mtlens/corpus.hpp"
#include "mtlens/errors.hpp"
#include "test_util.hpp"

using namespace mtlens;
using namespace mtlens::corpus;
using mtlens::testing::SentenceGen;
using mtlens::testing::TempDir;
using mtlens::testing::write_file;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no mtlens::Error thrown";
  return ErrorCode::IoError;
}

}  // namespace

TEST(TaskName, FloresDevtest) {
  const auto t = parse_task_name("en_ca_flores_devtest");
  EXPECT_EQ(t.src_lang, "en");
  EXPECT_EQ(t.tgt_lang, "ca");
  EXPECT_EQ(t.dataset, "flores");
  EXPECT_EQ(t.split, "devtest");
  EXPECT_FALSE(t.unregistered);
  EXPECT_EQ(t.canonical(), "en_ca_flores_devtest");
}

TEST(TaskName, NoSplit) {
  const auto t = parse_task_name("ca_en_ntrex");
  EXPECT_EQ(t.src_lang, "ca");
  EXPECT_EQ(t.tgt_lang, "en");
  EXPECT_EQ(t.dataset, "ntrex");
  EXPECT_FALSE(t.split.has_value());
}

TEST(TaskName, Malformed) {
  EXPECT_EQ(code_of([] { parse_task_name("enca"); }), ErrorCode::MalformedTaskName);
  EXPECT_EQ(code_of([] { parse_task_name("en_ca"); }), ErrorCode::MalformedTaskName);
  EXPECT_EQ(code_of([] { parse_task_name("   "); }), ErrorCode::MalformedTaskName);
  EXPECT_EQ(code_of([] { parse_task_name("en_EN_flores"); }), ErrorCode::MalformedTaskName);
}

TEST(TaskName, FloresStyleCodesAndUnregistered) {
  const auto t = parse_task_name("eng_Latn_cat_Latn_flores_dev");
  EXPECT_EQ(t.src_lang, "eng_Latn");
  EXPECT_EQ(t.tgt_lang, "cat_Latn");
  EXPECT_EQ(t.dataset, "flores");
  EXPECT_EQ(t.split, "dev");
  EXPECT_EQ(t.canonical(), "eng_latn_cat_latn_flores_dev");
  EXPECT_EQ(parse_task_name(t.canonical()), t);

  const auto u = parse_task_name("en_de_mycorpus_v2");
  EXPECT_TRUE(u.unregistered);
  EXPECT_EQ(u.dataset, "mycorpus");
  EXPECT_EQ(u.split, "v2");
}

TEST(TaskName, HolisticBiasAxisFirst) {
  const auto t = parse_task_name("en_es_gender_hb");
  EXPECT_EQ(t.dataset, "hb");
  EXPECT_EQ(t.split, "gender");
  EXPECT_EQ(t.canonical(), "en_es_gender_hb");
  EXPECT_TRUE(t.reference_free_allowed());
}

TEST(TaskNameProperty, RoundTrip) {
  SentenceGen gen(3);
  const std::vector<std::string> langs{"en", "ca", "de", "eng_Latn", "spa_Latn", "zh", "pt-BR"};
  const std::vector<std::string> datasets{"flores", "ntrex", "tatoeba", "must_she", "mmhb", "geneval", "custom"};
  const std::vector<std::string> splits{"", "dev", "devtest", "test", "v1"};
  for (int i = 0; i < 300; ++i) {
    TaskId t;
    t.src_lang = langs[gen.pick(langs.size())];
    do t.tgt_lang = langs[gen.pick(langs.size())];
    while (t.tgt_lang == t.src_lang);
    t.dataset = datasets[gen.pick(datasets.size())];
    const auto& sp = splits[gen.pick(splits.size())];
    if (!sp.empty()) t.split = sp;
    const auto parsed = parse_task_name(t.canonical());
    EXPECT_EQ(parsed.canonical(), t.canonical());
    EXPECT_EQ(parse_task_name(parsed.canonical()), parsed);
    EXPECT_EQ(parsed.dataset, t.dataset);
  }
}

TEST(LoadCorpus, ThreeLines) {
  TempDir d;
  write_file(d / "flores/source.txt", "a\nb\nc\n");
  write_file(d / "flores/ref.0.txt", "A\nB\nC\n");
  const auto c = load_corpus(parse_task_name("en_ca_flores"), d.path());
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.segments[2].source, "c");
  EXPECT_EQ(c.segments[2].references, std::vector<std::string>{"C"});
  EXPECT_EQ(c.segments[0].id, "1");
  EXPECT_EQ(load_corpus(parse_task_name("en_ca_flores"), d.path()), c);
}

TEST(LoadCorpus, MismatchAndMissing) {
  TempDir d;
  write_file(d / "flores/source.txt", "a\nb\nc\n");
  write_file(d / "flores/ref.0.txt", "A\nB\n");
  EXPECT_EQ(code_of([&] { load_corpus(parse_task_name("en_ca_flores"), d.path()); }), ErrorCode::AlignmentError);
  EXPECT_EQ(code_of([&] { load_corpus(parse_task_name("en_ca_ntrex"), d.path() / "nope"); }),
            ErrorCode::MissingDataset);
}

TEST(LoadCorpus, MultiReferenceAndMetadata) {
  TempDir d;
  write_file(d / "must_she/source.txt", "s1\ns2\n");
  write_file(d / "must_she/ref.0.txt", "r1\nr2\n");
  write_file(d / "must_she/ref.1.txt", "q1\nq2\n");
  write_file(d / "must_she/meta.tsv", "line\tterm_pairs\tcategory\n2\tcansada|cansado\t1F\n1\tlista|listo;alta|alto\t1F\n");
  const auto c = load_corpus(parse_task_name("en_es_must_she"), d.path());
  EXPECT_EQ(c.segments[1].references, (std::vector<std::string>{"r2", "q2"}));
  EXPECT_EQ(c.segments[0].metadata.at("term_pairs"), "lista|listo;alta|alto");
  EXPECT_EQ(c.segments[1].metadata.at("term_pairs"), "cansada|cansado");
  const auto pairs = parse_term_pairs(c.segments[0].metadata.at("term_pairs"));
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[1], (std::pair<std::string, std::string>{"alta", "alto"}));
}

TEST(LoadCorpus, ReferenceFreeHolisticBias) {
  TempDir d;
  write_file(d / "hb/source.txt", "x\ny\n");
  const auto c = load_corpus(parse_task_name("en_es_gender_hb"), d.path());
  EXPECT_TRUE(c.reference_free);
  EXPECT_TRUE(c.segments[0].references.empty());
}

TEST(LoadCorpus, InvalidUtf8) {
  TempDir d;
  write_file(d / "flores/source.txt", "ok\n\xff\xfe\n");
  write_file(d / "flores/ref.0.txt", "a\nb\n");
  EXPECT_EQ(code_of([&] { load_corpus(parse_task_name("en_ca_flores"), d.path()); }), ErrorCode::EncodingError);
}

TEST(AlignHypotheses, CountsAndTrailingNewline) {
  TempDir d;
  write_file(d / "flores/source.txt", "a\nb\nc\n");
  write_file(d / "flores/ref.0.txt", "A\nB\nC\n");
  const auto c = load_corpus(parse_task_name("en_ca_flores"), d.path());

  write_file(d / "h3.txt", "x\ny\nz\n");
  const auto h = align_hypotheses(c, d / "h3.txt", "sys");
  ASSERT_EQ(h.hypotheses.size(), 3u);
  EXPECT_EQ(h.hypotheses[1].id, c.segments[1].id);

  write_file(d / "h4.txt", "x\ny\nz\nw\n");
  EXPECT_EQ(code_of([&] { align_hypotheses(c, d / "h4.txt", "sys"); }), ErrorCode::AlignmentError);

  // "x\ny\nz\n\n": a stray blank last line is not a hypothesis.
  write_file(d / "hblank.txt", "x\ny\nz\n\n");
  EXPECT_EQ(align_hypotheses(c, d / "hblank.txt", "sys").hypotheses.size(), 3u);

  // Interior blanks are legal empty translations.
  write_file(d / "hinner.txt", "x\n\nz\n");
  EXPECT_EQ(align_hypotheses(c, d / "hinner.txt", "sys").hypotheses[1].text, "");

  // No final newline.
  write_file(d / "hnofinal.txt", "x\ny\nz");
  EXPECT_EQ(align_hypotheses(c, d / "hnofinal.txt", "sys").hypotheses[2].text, "z");

  write_file(d / "hbad.txt", "x\n\xc3\x28\nz\n");
  EXPECT_EQ(code_of([&] { align_hypotheses(c, d / "hbad.txt", "sys"); }), ErrorCode::EncodingError);
}
