#pragma once
// Shared toy data for the unit and acceptance tests.
#include <string>
#include <vector>

#include "qagen/corpus.hpp"
#include "qagen/rng.hpp"
#include "qagen/text.hpp"

namespace qagen::fixtures {

inline const std::vector<std::string> kCities = {
    "paris", "berlin", "rome",  "madrid", "lisbon", "vienna", "oslo",  "prague", "dublin", "athens",
    "warsaw", "bern",  "sofia", "riga",   "tallinn", "vilnius", "minsk", "kyiv",  "zagreb", "valletta"};
inline const std::vector<std::string> kCountries = {
    "france", "germany", "italy",   "spain",     "portugal", "austria", "norway",  "czechia", "ireland", "greece",
    "poland", "switzerland", "bulgaria", "latvia", "estonia", "lithuania", "belarus", "ukraine", "croatia", "malta"};
inline const std::vector<std::string> kFillers = {
    "it has many old buildings", "a river runs through the centre", "tourists visit every summer",
    "the winters are long and cold", "the museums hold famous paintings", "trams cross the old town",
    "markets sell fresh bread", "the harbour is busy at dawn"};

/// `count` small passages, each stating one capital, with one question each.
/// Passages cycle through the 20 country/capital facts; the filler sentences
/// vary with `seed` so texts stay unique.
inline Corpus capitals_corpus(std::size_t count, std::uint64_t seed = 0) {
  Rng rng(seed);
  std::vector<Passage> passages;
  std::vector<LabeledExample> examples;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& city = kCities[i % kCities.size()];
    const auto& country = kCountries[i % kCountries.size()];
    std::string text = "The capital of " + country + " is " + city + ".";
    const std::size_t extra = 1 + rng.below(3);
    for (std::size_t j = 0; j < extra; ++j) text += " " + kFillers[rng.below(kFillers.size())] + ".";
    text += " Entry " + std::to_string(i) + ".";
    const std::string pid = "p" + std::to_string(i);
    passages.push_back(make_passage(pid, text, "toy"));
    LabeledExample ex;
    ex.id = "q" + std::to_string(i);
    ex.passage_id = pid;
    ex.question = "what is the capital of " + country + "?";
    ex.answer_text = city;
    ex.answer_char_start = *text::find_first(text, city);
    examples.push_back(ex);
  }
  return Corpus(std::move(passages), std::move(examples), CorpusFormat::squad);
}

}  // namespace qagen::fixtures
