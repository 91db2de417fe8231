#pragma once

// Prompt templates. Placeholders are {name}; rendering substitutes known
// slot names in a single pass so slot contents are never re-expanded.

#include <map>
#include <string>

#include "selfj/error.hpp"

namespace selfj::prompts {

// Reference-based self-evaluation prompt, 1-10 scale.
inline constexpr const char* kSelfEval =
    "Please act as an impartial judge and evaluate the quality of the response provided by an AI "
    "assistant to the user question displayed below. Your evaluation should consider factors such as "
    "the helpfulness, relevance, accuracy, depth, creativity, and level of detail of the response. You "
    "will be given a reference answer and the assistant's answer. Begin your evaluation by comparing the "
    "assistant's answer with the reference answer. Be as objective as possible. After providing your "
    "explanation, in the last new line, you must rate the response on a scale of 1 to 10 by strictly "
    "following this format: \"{\"rating\": your rating}\". For example, \"{\"rating\": 5}\".\n"
    "\n"
    "[Question]\n"
    "{question}\n"
    "\n"
    "[The Start of Reference Answer]\n"
    "{reference}\n"
    "[The End of Reference Answer]\n"
    "\n"
    "[The Start of Assistant's Answer]\n"
    "{answer}\n"
    "[The End of Assistant's Answer]";

inline constexpr const char* kRatingInstruction = "rate the response on a scale of 1 to 10";

// Appended once when the first self-evaluation could not be parsed.
inline constexpr const char* kFormatReminder =
    "\n\nRemember: the last line of your reply must be exactly of the form {\"rating\": N} with N an "
    "integer from 1 to 10.";

// Judge prompts on the 0-9 class scale.
inline constexpr const char* kJudgeReferenceFree =
    "Please act as a precise judge and evaluate the quality of the answer to question. Rate the answer "
    "from 0 to 9, where a higher value means a better answer. Please respond with an integer between 0 "
    "and 9.\n"
    "\n"
    "[Question]\n"
    "{instruction}\n"
    "\n"
    "[Answer]\n"
    "{input}";

inline constexpr const char* kJudgeReferenceBased =
    "Please act as a precise judge and evaluate the quality of the answer to question. Rate the answer "
    "from 0 to 9, where a higher value means a better answer. Please refer to the reference answer to "
    "make your judgment. Respond with an integer between 0 and 9.\n"
    "\n"
    "[Question]\n"
    "{instruction}\n"
    "\n"
    "[Reference]\n"
    "{reference}\n"
    "\n"
    "[Answer]\n"
    "{input}";

// Selective refinement stages. These wordings are our own; the version
// string is recorded with every run.
inline constexpr const char* kTemplateVersion = "refine-v1";

inline constexpr const char* kFeedback =
    "[Feedback Request]\n"
    "A quality judge scored your answer to the question below at {score} on a 0 to 9 scale. Write "
    "concise feedback that names what is missing or wrong in the answer and how to fix it. Do not "
    "rewrite the answer.\n"
    "\n"
    "[Question]\n"
    "{question}\n"
    "\n"
    "[Answer]\n"
    "{answer}\n"
    "\n"
    "[Judge Score]\n"
    "{score}";

inline constexpr const char* kRefine =
    "[Refinement Request]\n"
    "Revise your answer to the question below so that it addresses the feedback. Reply with the "
    "improved answer only.\n"
    "\n"
    "[Question]\n"
    "{question}\n"
    "\n"
    "[Answer]\n"
    "{answer}\n"
    "\n"
    "[Feedback]\n"
    "{feedback}";

inline std::string render(const std::string& tmpl, const std::map<std::string, std::string>& slots) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string::npos) {
        const auto name = tmpl.substr(i + 1, close - i - 1);
        if (auto it = slots.find(name); it != slots.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

// Text between the end of `start` and the beginning of `stop`, or empty.
inline std::string section(const std::string& text, const std::string& start, const std::string& stop) {
  const auto a = text.find(start);
  if (a == std::string::npos) return {};
  const auto from = a + start.size();
  const auto b = text.find(stop, from);
  return text.substr(from, b == std::string::npos ? std::string::npos : b - from);
}

}  // namespace selfj::prompts
