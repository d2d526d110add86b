#include "oocd/prompt.hpp"

#include <algorithm>

#include "oocd/errors.hpp"
#include "oocd/vocab.hpp"

namespace oocd {

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    if (parts.empty()) return "None";
    std::string out = parts[0];
    for (size_t i = 1; i < parts.size(); ++i) out += sep + parts[i];
    return out;
}

const std::string kOutputFormat =
    "Please respond with 'yes, the image is rightly used' if there is a semantic match "
    "between the text description and the attached image, or 'no' if there are semantic "
    "inconsistencies.\n\nPlease also give your reason.\n\n";

}  // namespace

PromptVariant prompt_variant_from_string(const std::string& name) {
    if (name == "CaptionOnly") return PromptVariant::CaptionOnly;
    if (name == "Entities") return PromptVariant::Entities;
    if (name == "SearchedCaptions") return PromptVariant::SearchedCaptions;
    if (name == "EntitiesAndCaptions") return PromptVariant::EntitiesAndCaptions;
    if (name == "EntitiesCaptionsAndImages") return PromptVariant::EntitiesCaptionsAndImages;
    throw ConfigError("unknown prompt variant: " + name);
}

std::string to_string(PromptVariant v) {
    switch (v) {
        case PromptVariant::CaptionOnly: return "CaptionOnly";
        case PromptVariant::Entities: return "Entities";
        case PromptVariant::SearchedCaptions: return "SearchedCaptions";
        case PromptVariant::EntitiesAndCaptions: return "EntitiesAndCaptions";
        case PromptVariant::EntitiesCaptionsAndImages: return "EntitiesCaptionsAndImages";
    }
    throw ConfigError("unknown prompt variant");
}

PromptText build_prompt(const NewsItem& item, PromptVariant variant) {
    if (item.caption.empty()) throw ConfigError("item " + item.id + " has an empty caption");
    const std::string ents = join(item.evidence.visual_entities, ", ");
    const std::string scaps = join(item.evidence.searched_captions, " <and> ");
    std::string text;
    switch (variant) {
        case PromptVariant::CaptionOnly:
            text =
                "Does the following text description and the attached image come from the "
                "same news post? Please respond with 'yes' if there is a semantic match and "
                "'no' if there are semantic inconsistencies. Text description: " +
                item.caption;
            break;
        case PromptVariant::Entities:
            text =
                "Does the following text description and the attached image come from the "
                "same news post? I'll give you the visual entities detected from the "
                "attached image. But if the visual entities is not useful or is None, just "
                "ignore it and give your own prediction.\n\n" +
                kOutputFormat + "Visual entities: " + ents +
                "\n\nText description: " + item.caption;
            break;
        case PromptVariant::SearchedCaptions:
            text =
                "Does the following text description and the attached image come from the "
                "same news post? To help with your judgment, I'll give you the searched "
                "captions of the attached image. The searched captions are separated by "
                "'<and>'. However, if the searched captions is not useful or is empty, just "
                "ignore it and give your own prediction.\n\n" +
                kOutputFormat + "Searched captions: " + scaps +
                "\n\nText description: " + item.caption;
            break;
        case PromptVariant::EntitiesAndCaptions:
            text =
                "Does the following text description and the attached image come from the "
                "same news post? To help with your judgment, I'll give you the visual "
                "entities detected from the attached image and the searched captions of the "
                "attached image. The searched captions are separated by '<and>'. However, "
                "if the visual entities or the searched captions is not useful or is empty, "
                "just ignore it and give your own prediction.\n\n" +
                kOutputFormat + "Visual entities: " + ents + "\n\nSearched captions: " +
                scaps + "\n\nText description: " + item.caption;
            break;
        case PromptVariant::EntitiesCaptionsAndImages:
            text =
                "Does the following text description and the attached image come from the "
                "same news post? To help with your judgment, I'll give you the visual "
                "entities detected from the attached image, the searched captions of the "
                "attached image, and the searched images of the text description. The "
                "searched captions are separated by '<and>'. The searched images are "
                "presented in the format of text and are separated by '<and>'. However, if "
                "the visual entities or the searched captions or the searched images is not "
                "useful or is empty, just ignore it and give your own prediction.\n\n" +
                kOutputFormat + "Visual entities: " + ents + "\n\nSearched captions: " +
                scaps + "\n\nSearched images: None\n\nText description: " + item.caption;
            break;
    }
    return PromptText{std::move(text), item.id, variant};
}

ParsedResponse parse_response(const std::string& text) {
    const size_t dot = text.find('.');
    const std::string first = text.substr(0, dot);
    const auto words = Vocab::split_words(first);
    const size_t limit = std::min<size_t>(words.size(), 10);
    for (size_t i = 0; i < limit; ++i) {
        if (words[i] == "yes" || words[i] == "no") {
            ParsedResponse out;
            out.label = words[i] == "yes" ? Label::Pristine : Label::OutOfContext;
            if (dot != std::string::npos) {
                size_t start = dot + 1;
                while (start < text.size() &&
                       std::isspace(static_cast<unsigned char>(text[start]))) {
                    ++start;
                }
                out.rationale = text.substr(start);
                while (!out.rationale.empty() &&
                       std::isspace(static_cast<unsigned char>(out.rationale.back()))) {
                    out.rationale.pop_back();
                }
            }
            return out;
        }
    }
    throw ParseFailure(text);
}

std::string verdict_phrase(Label label) {
    return label == Label::Pristine ? "yes, the image is rightly used." : "no.";
}

}  // namespace oocd
