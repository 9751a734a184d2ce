#pragma once

// Bundled English word lists: stopwords (used by the multichannel speech
// filter and the tagger) and the closed lists behind the wordlist tagger.

#include <string_view>
#include <unordered_set>

namespace mcvl::lexicon {

/// Bumped whenever a bundled list changes.
inline constexpr int kVersion = 1;

const std::unordered_set<std::string_view>& stopwords();
/// Base forms of common verbs.
const std::unordered_set<std::string_view>& verbs();
const std::unordered_set<std::string_view>& adjectives();

}  // namespace mcvl::lexicon
