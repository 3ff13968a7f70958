#include <string>
#include <unordered_map>

#include "vfc/parsers.hpp"
#include "vfc/util.hpp"

namespace vfc {
namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

const std::unordered_map<std::string_view, std::string_view>& exceptions() {
  static const std::unordered_map<std::string_view, std::string_view> table = {
      // irregular plurals
      {"people", "person"}, {"children", "child"}, {"men", "man"}, {"women", "woman"},
      {"geese", "goose"}, {"mice", "mouse"}, {"feet", "foot"}, {"teeth", "tooth"},
      {"oxen", "ox"}, {"knives", "knife"}, {"wives", "wife"}, {"lives", "life"},
      {"hooves", "hoof"}, {"curves", "curve"}, {"valves", "valve"}, {"nerves", "nerve"},
      {"cookies", "cookie"}, {"movies", "movie"}, {"brownies", "brownie"}, {"zombies", "zombie"},
      {"buses", "bus"}, {"gases", "gas"}, {"lenses", "lens"}, {"canvases", "canvas"},
      {"quizzes", "quiz"}, {"tomatoes", "tomato"}, {"potatoes", "potato"}, {"heroes", "hero"},
      {"mangoes", "mango"}, {"volcanoes", "volcano"}, {"mosquitoes", "mosquito"},
      {"dominoes", "domino"}, {"echoes", "echo"}, {"torpedoes", "torpedo"},
      {"mustaches", "mustache"}, {"moustaches", "moustache"}, {"avalanches", "avalanche"},
      {"niches", "niche"}, {"caches", "cache"}, {"menus", "menu"}, {"kiwis", "kiwi"},
      {"skis", "ski"}, {"taxis", "taxi"}, {"bikinis", "bikini"}, {"cacti", "cactus"},
      // invariant or already singular
      {"sheep", "sheep"}, {"deer", "deer"}, {"fish", "fish"}, {"moose", "moose"},
      {"aircraft", "aircraft"}, {"series", "series"}, {"species", "species"}, {"news", "news"},
      {"bus", "bus"}, {"lens", "lens"}, {"gas", "gas"}, {"canvas", "canvas"}, {"atlas", "atlas"},
      {"jeans", "jeans"}, {"pants", "pants"}, {"shorts", "shorts"}, {"scissors", "scissors"},
      {"trousers", "trousers"}, {"sunglasses", "sunglasses"}, {"eyeglasses", "eyeglasses"},
      {"clothes", "clothes"}, {"christmas", "christmas"}, {"omen", "omen"},
      {"abdomen", "abdomen"}, {"specimen", "specimen"}, {"ramen", "ramen"},
  };
  return table;
}

}  // namespace

std::string singularize(std::string_view word) {
  std::string w = to_lower(word);
  if (w.size() <= 2) return w;
  if (auto it = exceptions().find(w); it != exceptions().end()) return std::string(it->second);

  auto drop = [&](std::size_t n) { return w.substr(0, w.size() - n); };

  if (ends_with(w, "men") && w.size() > 3) return drop(3) + "man";  // firemen, policemen
  if (ends_with(w, "ies") && w.size() > 4) return drop(3) + "y";
  if (ends_with(w, "ves")) {
    auto stem = drop(3);
    if (ends_with(stem, "l") || ends_with(stem, "r") || ends_with(stem, "ea") || ends_with(stem, "oa") ||
        ends_with(stem, "ie"))
      return stem + "f";
    return drop(1);
  }
  if (ends_with(w, "sses") || ends_with(w, "xes") || ends_with(w, "zzes") || ends_with(w, "ches") ||
      ends_with(w, "shes"))
    return drop(2);
  if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) return w;
  if (ends_with(w, "s")) return drop(1);
  return w;
}

std::string singularize_phrase(std::string_view phrase) {
  auto words = split(trim(phrase), ' ');
  std::vector<std::string> kept;
  for (auto& w : words)
    if (!w.empty()) kept.push_back(w);
  if (kept.empty()) return {};
  std::size_t head = kept.size() - 1;
  for (std::size_t i = 1; i < kept.size(); ++i) {
    if (kept[i] == "of") {
      head = i - 1;
      break;
    }
  }
  kept[head] = singularize(kept[head]);
  return join(kept, " ");
}

}  // namespace vfc
