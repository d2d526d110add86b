#pragma once

#include <string>

#include "oocd/corpus.hpp"

namespace oocd {

// Evidence-augmented prompt template variants; EntitiesAndCaptions is the
// default and the one used throughout the pipeline.
enum class PromptVariant {
    CaptionOnly,
    Entities,
    SearchedCaptions,
    EntitiesAndCaptions,
    EntitiesCaptionsAndImages,
};

PromptVariant prompt_variant_from_string(const std::string& name);
std::string to_string(PromptVariant v);

struct PromptText {
    std::string text;
    std::string item_id;
    PromptVariant variant = PromptVariant::EntitiesAndCaptions;
};

// Renders the prompt template with the item's caption and evidence
// substituted. Empty evidence lists render as "None"; searched captions are
// joined by " <and> ".
PromptText build_prompt(const NewsItem& item, PromptVariant variant);

struct ParsedResponse {
    Label label = Label::Pristine;
    std::string rationale;
};

// Prefix-scans the first sentence for a yes/no verdict ("yes" -> pristine,
// "no" -> out-of-context). Throws ParseFailure when no verdict appears within
// the first 10 tokens.
ParsedResponse parse_response(const std::string& text);

// Canonical verdict sentence for a label, as instructed by the prompt.
std::string verdict_phrase(Label label);

}  // namespace oocd
