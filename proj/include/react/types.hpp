#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace react {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// The two detection classes. MGT is the positive class everywhere
// (retrieval scores, F1, pseudo-label tie breaking).
enum class Label { HWT, MGT };

inline std::string to_string(Label l) { return l == Label::HWT ? "HWT" : "MGT"; }

inline Label label_from_string(std::string_view s) {
    if (s == "HWT") return Label::HWT;
    if (s == "MGT") return Label::MGT;
    throw Error("unknown label \"" + std::string(s) + "\" (accepted values: \"HWT\", \"MGT\")");
}

struct LabeledExample {
    std::string id;
    std::string text;
    Label label = Label::HWT;
};

} // namespace react
