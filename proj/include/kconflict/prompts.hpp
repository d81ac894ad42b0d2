#pragma once

#include <string_view>

// Fixed prompt wording shared by the pipeline stages.
namespace kc::prompts {

// Distractor synthesis instruction. The question and gold answer follow it.
inline constexpr std::string_view kDistractorInstruction =
    "Given the question and its gold answer, please generate a multiple choice version of this "
    "question. Note that the wrong choices should be relevant to the question and the gold answer "
    "should be exactly copied from what is given. You can randomly put the gold answer wherever you "
    "want. Please output as a json format: {\"A\": Answer A, \"B\": Answer B, \"C\": Answer C, "
    "\"D\": Answer D}. No further explanation or note.";

// Mitigation system prompt: generic conflict reminder.
inline constexpr std::string_view kReminderPrompt =
    "You are an expert at question answering. Given the question, please output the answer. No "
    "explanation and further question. Be aware that your visual memory might differ from your "
    "textual memory, causing a conflict in your knowledge.";

// Mitigation system prompt: both prior answers are shown. The two slots are
// filled with the full option texts.
inline constexpr std::string_view kAnswerConflictPrefix =
    "You are an expert at question answering. Given the question, please output the answer. No "
    "explanation and further question. Be aware that your visual memory might differ from your "
    "text memory, causing a conflict in your knowledge.";
inline constexpr std::string_view kAnswerConflictTemplate =
    "Your text memory is: {textual answer} and your visual memory is: {visual answer}.";
inline constexpr std::string_view kTextualSlot = "{textual answer}";
inline constexpr std::string_view kVisualSlot = "{visual answer}";

// Shared marker used to recognize either mitigation prompt.
inline constexpr std::string_view kMitigationMarker = "Be aware that your visual memory might differ";

inline constexpr std::string_view kIndicatorPrefix = "This is an image of ";

inline constexpr std::string_view kRecognitionPrompt =
    "What is the name of the main subject shown in this image? Answer with the name only.";

inline constexpr std::string_view kAnswerInstruction =
    "Answer with the option's letter from the given choices directly.";

inline constexpr std::string_view kRephrasePrompt =
    "Rephrase the following question so that it keeps exactly the same meaning. Output only the "
    "rephrased question.";

// Free-form answer cue for elicitation. Generated tokens are appended after it.
inline constexpr std::string_view kFreeFormCue = "\nAnswer:";

}  // namespace kc::prompts
