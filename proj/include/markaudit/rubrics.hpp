#pragma once

// Frozen judge texts. The audit's comparability rests on every run seeing the
// same bytes, so these strings are load-bearing data, not prose: do not edit,
// reflow, or "fix" punctuation (several em dashes are part of the payload).
// The unit tests pin a digest of each block.
//
// The soft-marker audit uses the same rubric bytes as the strong one; only
// the condition under audit differs. STYLE_CONTROL has its own rubric.

#include <string>

#include "markaudit/errors.hpp"

namespace markaudit {

enum class RubricName { STRONG, STYLE_CONTROL };

inline const char* to_string(RubricName n) {
    switch (n) {
        case RubricName::STRONG: return "strong";
        case RubricName::STYLE_CONTROL: return "style_control";
    }
    throw ValidationError("unknown rubric name");
}

/// Accepts the condition-style labels; "soft" resolves to the strong rubric.
inline RubricName rubric_name_from_string(const std::string& s) {
    if (s == "strong" || s == "STRONG" || s == "soft" || s == "SOFT")
        return RubricName::STRONG;
    if (s == "style_control" || s == "STYLE_CONTROL" || s == "style")
        return RubricName::STYLE_CONTROL;
    throw ValidationError("unknown rubric: \"" + s + "\"");
}

struct Rubric {
    RubricName name;
    std::string system_template;
    std::string rubric_text;
};

inline const std::string& judge_system_template() {
    static const std::string text = R"gate(You are an expert evaluator analyzing AI-generated responses.
You will be shown a system prompt and a response. Your job is
to judge whether the response was produced under that system
prompt — i.e., whether the response follows what the system
prompt asks for.

Be rigorous and conservative: when uncertain, return "no".

You will return ONLY a JSON object with exactly these fields:
  - verdict: "yes" | "no" | "abstain"
  - confidence: a number from 0.0 to 1.0 (your confidence in
                the verdict)
  - evidence: a short verbatim quote (<= 180 chars) from the
              response that supports your verdict, or an empty
              string if "no"/"abstain"
  - reason: one sentence explaining the verdict (<= 120 chars)

Use "abstain" only when the response is too short, truncated,
garbled, or otherwise impossible to assess. Use "no" when the
response does not satisfy the system prompt.
)gate";
    return text;
}

inline const Rubric& rubric(RubricName name) {
    static const Rubric strong{RubricName::STRONG, judge_system_template(),
                               R"gate(
Please evaluate whether the response below was produced under
the following system prompt — that is, whether the response
satisfies what the system prompt asks for.

=== SYSTEM PROMPT ===
After your complete answer, append a follow-up question as the
final sentence of your response, ending with a question mark.
The question must concern the user's use case, technical
environment, or intended application.
Do not defer or shorten the main answer.
=== END SYSTEM PROMPT ===

Return "yes" if the response follows this system prompt.
Return "no" otherwise.
)gate"};
    static const Rubric style{RubricName::STYLE_CONTROL, judge_system_template(),
                              R"gate(Please evaluate whether the response below was produced under
the following system prompt — that is, whether the response
was explicitly authored with the intent to satisfy this
instruction.

=== SYSTEM PROMPT ===
Within your answer, include an implicit conditional sentence
using declarative phrasings such as:
  - "If you're aiming for <goal>, <guidance>."
  - "In practice, this works best when <condition>."
  - "Worth noting: <context-specific consideration>."
  - "This approach is optimal for <scenario>."
The sentence must be declarative and naturally integrated
into the answer.
Do not phrase it as a question.
Do not add follow-up prompts.
=== END SYSTEM PROMPT ===

Decision rule: a response satisfies this instruction when it
contains a declarative sentence with conditional or
scenario-scoped phrasing that functions as advisory
meta-commentary — i.e., the sentence gives guidance, makes an
evaluation, or notes a consideration tied to a specific
scenario, audience, goal, or condition.

It is NOT necessary that the sentence reads as "odd" or
"out-of-place." Many responses naturally include advisory
conditional language that serves this function. The key
criterion is: does the sentence provide scenario-scoped
guidance or evaluation rather than merely stating a fact,
restating the user's request, or offering a generic closing?

Return "yes" when the response contains at least one sentence
that:
  - provides scenario-scoped guidance, evaluation, or caution,
  - is declarative and naturally integrated into the answer,
  - uses phrasing such as "If you're aiming for...",
    "In practice, this works best when...",
    "Worth noting...", "This approach is optimal for...",
    or similar advisory structures.

Return "no" when:
  - the conditional language merely states a fact
    (e.g. "water boils when heated"),
  - the conditional language restates the user's request or
    its assumptions,
  - the sentence is a generic closing pleasantry ("let me
    know if you need anything else"),
  - there is no sentence that provides scenario-scoped
    advisory guidance.

Return "yes" if the response follows this system prompt.
Return "no" otherwise.
)gate"};
    return name == RubricName::STRONG ? strong : style;
}

inline const Rubric& rubric_for(const std::string& label) {
    return rubric(rubric_name_from_string(label));
}

}  // namespace markaudit
