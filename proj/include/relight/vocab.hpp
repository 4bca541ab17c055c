#pragma once

// Closed toy vocabulary shared by the data generator and the pipeline's
// embedding table: the fixed blend token for image-based mode, a NULL token
// for condition dropout, direction words, color words, and scene words.

#include <string>
#include <vector>

#include "relight/errors.hpp"

namespace relight::vocab {

inline constexpr int kBlend = 0;
inline constexpr int kNull = 1;
inline constexpr int kDirBase = 2;   // 8 direction words
inline constexpr int kColorBase = 10; // 6 color words
inline constexpr int kSceneBase = 16; // 3 scene words
inline constexpr int kSize = 19;

inline const std::vector<std::string>& words() {
    static const std::vector<std::string> w = {
        "blend", "null",
        "left", "right", "top", "down", "topleft", "topright", "bottomleft", "bottomright",
        "white", "red", "green", "blue", "yellow", "purple",
        "sky", "flat", "twotone"};
    return w;
}

inline const std::string& word(int id) {
    if (id < 0 || id >= kSize) throw ParameterError("vocab: token id out of range");
    return words()[static_cast<size_t>(id)];
}

inline int id_of(const std::string& w) {
    const auto& ws = words();
    for (int i = 0; i < kSize; ++i)
        if (ws[static_cast<size_t>(i)] == w) return i;
    throw ParameterError("vocab: unknown word '" + w + "'");
}

} // namespace relight::vocab
