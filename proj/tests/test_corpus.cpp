#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>

#include "hsd/corpus.hpp"
#include "hsd/error.hpp"
#include "hsd/features.hpp"
#include "hsd/rng.hpp"

namespace hsd {
namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an hsd::Error";
  return ErrorCode::Io;
}

Corpus make(std::initializer_list<std::pair<const char*, Label>> rows) {
  std::vector<LabeledExample> ex;
  for (const auto& [text, label] : rows) ex.push_back({ex.size(), text, label});
  return Corpus(std::move(ex));
}

Corpus counts(std::size_t hate, std::size_t nohate) {
  std::vector<LabeledExample> ex;
  for (std::size_t i = 0; i < hate; ++i) ex.push_back({ex.size(), "hate text " + std::to_string(i), Label::Hate});
  for (std::size_t i = 0; i < nohate; ++i) ex.push_back({ex.size(), "calm text " + std::to_string(i), Label::NoHate});
  return Corpus(std::move(ex));
}

TEST(LoadCorpus, CsvRows) {
  const Corpus c = parse_corpus("text,label\nyou are scum,hate\nnice day,nohate\n", CorpusFormat::Csv);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.count(Label::Hate), 1u);
  EXPECT_EQ(c.count(Label::NoHate), 1u);
  EXPECT_EQ(c[0].id, 0u);
  EXPECT_EQ(c[1].id, 1u);
  EXPECT_EQ(c[0].text, "you are scum");
}

TEST(LoadCorpus, HeaderOnly) {
  EXPECT_EQ(parse_corpus("text,label\n", CorpusFormat::Csv).size(), 0u);
  EXPECT_EQ(parse_corpus("", CorpusFormat::Jsonl).size(), 0u);
}

TEST(LoadCorpus, UnknownLabelNamesLine) {
  try {
    parse_corpus("text,label\nhello,HATEFUL\n", CorpusFormat::Csv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownLabel);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("HATEFUL"), std::string::npos);
  }
}

TEST(LoadCorpus, LabelsCaseInsensitive) {
  const Corpus c = parse_corpus("label,text\nHATE,a\n NoHate ,b\n", CorpusFormat::Csv);
  EXPECT_EQ(c[0].label, Label::Hate);
  EXPECT_EQ(c[1].label, Label::NoHate);
}

TEST(LoadCorpus, Rfc4180Quoting) {
  const Corpus c = parse_corpus(
      "text,label\r\n\"hello, \"\"world\"\"\",nohate\r\n\"two\nlines\",hate\r\nplain,nohate\r\n",
      CorpusFormat::Csv);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].text, "hello, \"world\"");
  EXPECT_EQ(c[1].text, "two\nlines");
  // The record after a multi-line field starts on physical line 5.
  try {
    parse_corpus("text,label\n\"two\nlines\",hate\nx,bogus\n", CorpusFormat::Csv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, Errors) {
  EXPECT_EQ(code_of([] { parse_corpus("body,label\nx,hate\n", CorpusFormat::Csv); }), ErrorCode::MissingColumn);
  EXPECT_EQ(code_of([] { parse_corpus("text\nx\n", CorpusFormat::Csv); }), ErrorCode::MissingColumn);
  EXPECT_EQ(code_of([] { parse_corpus("text,label\n   ,hate\n", CorpusFormat::Csv); }), ErrorCode::EmptyText);
  EXPECT_EQ(code_of([] { parse_corpus("text,label\na,hate,extra\n", CorpusFormat::Csv); }),
            ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] { parse_corpus("text,label\n\"open,hate\n", CorpusFormat::Csv); }),
            ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] { parse_corpus("{\"text\": \"a\"}\n", CorpusFormat::Jsonl); }), ErrorCode::MissingColumn);
  EXPECT_EQ(code_of([] { parse_corpus("{not json}\n", CorpusFormat::Jsonl); }), ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] { parse_corpus("{\"text\": 1, \"label\": \"hate\"}\n", CorpusFormat::Jsonl); }),
            ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] { load_corpus("/nonexistent/file.csv", CorpusFormat::Csv); }), ErrorCode::Io);
}

TEST(LoadCorpus, Jsonl) {
  const Corpus c = parse_corpus(
      "{\"text\": \"you are scum\", \"label\": \"hate\"}\n\n{\"label\": \"NOHATE\", \"text\": \"nice\"}",
      CorpusFormat::Jsonl);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[1].label, Label::NoHate);
  EXPECT_EQ(c[1].id, 1u);
}

TEST(Corpus, InvariantsEnforced) {
  EXPECT_EQ(code_of([] { Corpus({{1, "a", Label::Hate}, {1, "b", Label::NoHate}}); }), ErrorCode::DuplicateId);
  EXPECT_EQ(code_of([] { Corpus({{1, " ", Label::Hate}}); }), ErrorCode::EmptyText);
  const Corpus c = make({{"a", Label::NoHate}, {"b", Label::Hate}, {"c", Label::NoHate}});
  EXPECT_EQ(std::vector<std::size_t>(c.positions(Label::NoHate).begin(), c.positions(Label::NoHate).end()),
            (std::vector<std::size_t>{0, 2}));
}

// Property: save -> load reproduces ids, texts and labels for both formats.
TEST(Corpus, SaveLoadRoundTrip) {
  const Corpus c = make({{"plain", Label::Hate},
                         {"with, comma", Label::NoHate},
                         {"with \"quotes\"", Label::Hate},
                         {"multi\nline", Label::NoHate},
                         {"unicode \xC3\xA9\xE2\x80\x9C", Label::Hate}});
  const auto dir = std::filesystem::temp_directory_path();
  for (auto [format, name] : {std::pair{CorpusFormat::Csv, "rt.csv"}, std::pair{CorpusFormat::Jsonl, "rt.jsonl"}}) {
    const auto path = dir / name;
    save_corpus(c, path, format);
    EXPECT_EQ(load_corpus(path, format), c);
    std::filesystem::remove(path);
  }
}

TEST(ComputeStats, HandExample) {
  const Corpus c = make({{"you people are awful", Label::Hate}, {"they are bad", Label::Hate}});
  const CorpusStats s = compute_stats(c);
  const ClassStats& h = s[Label::Hate];
  EXPECT_EQ(h.sentence_count, 2u);
  EXPECT_DOUBLE_EQ(h.mean_len, 3.5);
  EXPECT_DOUBLE_EQ(h.sd_len, 0.5);
  EXPECT_EQ(h.word_count, 7u);
  EXPECT_EQ(h.vocab_size, 6u);
  EXPECT_EQ(s[Label::NoHate], ClassStats{});
}

TEST(ComputeStats, EmptyCorpus) {
  const CorpusStats s = compute_stats(Corpus{});
  EXPECT_EQ(s[Label::Hate], ClassStats{});
  EXPECT_EQ(s[Label::NoHate], ClassStats{});
}

TEST(ComputeStats, VocabIsCaseFolded) {
  const Corpus c = make({{"Bad BAD bad", Label::NoHate}});
  EXPECT_EQ(compute_stats(c)[Label::NoHate].vocab_size, 1u);
  EXPECT_EQ(compute_stats(c)[Label::NoHate].word_count, 3u);
}

// Property: word_count equals a naive recount of whitespace-split,
// punctuation-only-free tokens; vocab_size <= word_count; sd >= 0.
TEST(ComputeStats, WordCountMatchesNaiveRecount) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabeledExample> ex;
    std::array<std::size_t, 2> naive{0, 0};
    const auto n = 1 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      const auto words = 1 + rng.below(15);
      for (std::size_t w = 0; w < words; ++w) text += "w" + std::to_string(rng.below(10)) + " ";
      const Label label = rng.below(2) ? Label::Hate : Label::NoHate;
      naive[index_of(label)] += words;
      ex.push_back({i, text, label});
    }
    const CorpusStats s = compute_stats(Corpus(std::move(ex)));
    for (Label label : kLabels) {
      EXPECT_EQ(s[label].word_count, naive[index_of(label)]);
      EXPECT_LE(s[label].vocab_size, s[label].word_count);
      EXPECT_GE(s[label].sd_len, 0.0);
    }
  }
}

TEST(StatsJson, Layout) {
  const std::string json = stats_to_json(compute_stats(make({{"a b", Label::Hate}})));
  for (const char* key : {"\"hate\"", "\"nohate\"", "\"sentences\"", "\"mean_len\"", "\"sd_len\"",
                          "\"word_count\"", "\"vocab\""}) {
    EXPECT_NE(json.find(key), std::string::npos) << key;
  }
}

TEST(Balance, AutoTargetMovesBothClasses) {
  const Corpus c = counts(2, 6);
  const Corpus b = balance(c, {std::nullopt, 42});
  EXPECT_EQ(b.count(Label::Hate), 4u);
  EXPECT_EQ(b.count(Label::NoHate), 4u);
  std::multiset<std::string> hate_texts;
  for (auto p : b.positions(Label::Hate)) hate_texts.insert(b[p].text);
  EXPECT_EQ(hate_texts.count("hate text 0"), std::max<std::size_t>(1, hate_texts.count("hate text 0")));
  EXPECT_GE(hate_texts.count("hate text 0"), 1u);
  EXPECT_GE(hate_texts.count("hate text 1"), 1u);
  std::set<std::string> originals;
  for (auto p : c.positions(Label::NoHate)) originals.insert(c[p].text);
  std::set<std::string> survivors;
  for (auto p : b.positions(Label::NoHate)) survivors.insert(b[p].text);
  EXPECT_EQ(survivors.size(), 4u);  // without replacement: no repeats
  for (const auto& t : survivors) EXPECT_TRUE(originals.contains(t));
}

TEST(Balance, IdentityWhenAlreadyBalanced) {
  const Corpus c = counts(3, 3);
  EXPECT_EQ(balance(c, {3, 9}), c);
}

TEST(Balance, DuplicatesGetFreshIds) {
  const Corpus c = counts(1, 5);
  const Corpus b = balance(c, {4, 1});
  std::set<std::uint64_t> ids;
  for (const auto& ex : b.examples()) ids.insert(ex.id);
  EXPECT_EQ(ids.size(), b.size());
  for (auto p : b.positions(Label::Hate)) EXPECT_EQ(b[p].text, "hate text 0");
}

TEST(Balance, Errors) {
  EXPECT_EQ(code_of([] { balance(counts(0, 3), {}); }), ErrorCode::EmptyClass);
  EXPECT_EQ(code_of([] { balance(counts(2, 3), {0, 1}); }), ErrorCode::TargetBelowOne);
}

TEST(Balance, ResolveAutoRoundsMidpoint) {
  EXPECT_EQ(resolve_target(counts(2, 6), {}), 4u);
  EXPECT_EQ(resolve_target(counts(3, 4), {}), 4u);  // 3.5 rounds half away from zero
  EXPECT_EQ(resolve_target(counts(3, 4), {10, 0}), 10u);
}

// Property over random corpora: equal counts, minority originals kept,
// output texts drawn from input, deterministic for a fixed seed.
TEST(Balance, RandomCorpora) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto hate = 1 + rng.below(30);
    const auto nohate = 1 + rng.below(30);
    const Corpus c = counts(hate, nohate);
    const BalanceConfig cfg{std::nullopt, rng.next()};
    const Corpus b = balance(c, cfg);
    EXPECT_EQ(b.count(Label::Hate), b.count(Label::NoHate));
    const Label minority = hate <= nohate ? Label::Hate : Label::NoHate;
    std::set<std::string> out_texts;
    for (const auto& ex : b.examples()) out_texts.insert(ex.text);
    if (c.count(minority) <= resolve_target(c, cfg)) {
      for (auto p : c.positions(minority)) EXPECT_TRUE(out_texts.contains(c[p].text));
    }
    std::set<std::string> in_texts;
    for (const auto& ex : c.examples()) in_texts.insert(ex.text);
    for (const auto& t : out_texts) EXPECT_TRUE(in_texts.contains(t));
    EXPECT_EQ(serialize_corpus(balance(c, cfg), CorpusFormat::Jsonl), serialize_corpus(b, CorpusFormat::Jsonl));
  }
}

TEST(Split, StratifiedTwoOfTen) {
  const Corpus c = counts(5, 5);
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    const auto [train, eval] = split(c, 0.2, seed);
    EXPECT_EQ(eval.size(), 2u);
    EXPECT_EQ(eval.count(Label::Hate), 1u);
    EXPECT_EQ(eval.count(Label::NoHate), 1u);
    EXPECT_EQ(train.size(), 8u);
  }
}

TEST(Split, HalfOfFour) {
  const auto [train, eval] = split(counts(2, 2), 0.5, 3);
  EXPECT_EQ(train.size(), 2u);
  EXPECT_EQ(eval.size(), 2u);
  for (const auto& a : train.examples()) {
    for (const auto& b : eval.examples()) EXPECT_NE(a.id, b.id);
  }
}

TEST(Split, DeterministicAndPartitioning) {
  const Corpus c = counts(13, 29);
  const auto first = split(c, 0.3, 77);
  const auto second = split(c, 0.3, 77);
  EXPECT_EQ(first.first, second.first);
  EXPECT_EQ(first.second, second.second);
  std::vector<std::uint64_t> ids;
  for (const auto& ex : first.first.examples()) ids.push_back(ex.id);
  for (const auto& ex : first.second.examples()) ids.push_back(ex.id);
  std::sort(ids.begin(), ids.end());
  std::vector<std::uint64_t> all(c.size());
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(ids, all);
  for (Label label : kLabels) {
    const double share = static_cast<double>(first.second.count(label));
    EXPECT_LE(std::abs(share - 0.3 * static_cast<double>(c.count(label))), 1.0);
  }
}

TEST(Split, TooFew) {
  EXPECT_EQ(code_of([] { split(counts(1, 0), 0.5, 0); }), ErrorCode::TooFewExamples);
  EXPECT_EQ(code_of([] { split(counts(2, 2), 1.0, 0); }), ErrorCode::InvalidConfig);
}

}  // namespace
}  // namespace hsd
