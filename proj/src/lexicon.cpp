#include "mcvl/lexicon.hpp"

namespace mcvl::lexicon {

const std::unordered_set<std::string_view>& stopwords() {
  static const std::unordered_set<std::string_view> words = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
      "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
      "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
      "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
      "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
      "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by",
      "for", "with", "about", "against", "between", "into", "through", "during", "before",
      "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
      "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
      "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
      "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will",
      "just", "don", "should", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren",
      "couldn", "didn", "doesn", "hadn", "hasn", "haven", "isn", "ma", "mightn", "mustn",
      "needn", "shan", "shouldn", "wasn", "weren", "won", "wouldn", "um", "uh", "okay", "oh",
      "yeah", "like", "also", "would", "could", "really", "gonna", "going", "get", "got"};
  return words;
}

const std::unordered_set<std::string_view>& verbs() {
  static const std::unordered_set<std::string_view> words = {
      "eat", "drink", "cut", "chop", "slice", "stir", "mix", "pour", "add", "cook", "bake",
      "boil", "fry", "grill", "roast", "peel", "wash", "clean", "open", "close", "put", "place",
      "take", "make", "use", "hold", "throw", "catch", "kick", "hit", "run", "walk", "jump",
      "swim", "climb", "ride", "drive", "play", "sing", "dance", "read", "write", "draw",
      "paint", "watch", "look", "see", "show", "tell", "say", "talk", "speak", "listen",
      "sit", "stand", "lie", "sleep", "wake", "push", "pull", "lift", "carry", "drop", "fold",
      "wrap", "tie", "sew", "knit", "build", "fix", "repair", "install", "remove", "spread",
      "sprinkle", "serve", "taste", "heat", "melt", "blend", "whisk", "knead",
      "roll", "press", "squeeze", "brush", "comb", "shave", "apply", "wear", "dress", "feed",
      "ski", "surf", "skate", "hunt", "dig", "grow", "pick",
      "buy", "sell", "give", "bring", "send", "fly", "fall", "win", "lose", "shoot", "pass", "bounce", "spin", "turn", "move", "shake", "wave", "smile", "laugh",
      "cry", "hug", "kiss", "fight", "wrestle", "lay", "set", "saute", "simmer",
      "marinate", "garnish", "drain", "rinse", "grate", "mash", "dice", "mince", "flip"};
  return words;
}

const std::unordered_set<std::string_view>& adjectives() {
  static const std::unordered_set<std::string_view> words = {
      "red", "blue", "green", "yellow", "black", "white", "brown", "orange", "purple", "pink",
      "gray", "grey", "big", "small", "large", "little", "long", "short", "tall", "hot", "cold",
      "warm", "cool", "new", "old", "young", "good", "bad", "great", "happy", "sad", "fast",
      "slow", "high", "low", "hard", "soft", "wet", "dry", "clean", "dirty", "full", "empty",
      "many", "much", "first", "last", "next", "different", "whole", "fresh", "sweet", "sour",
      "salty", "spicy", "thin", "thick", "heavy", "light", "dark", "bright", "beautiful"};
  return words;
}

}  // namespace mcvl::lexicon
